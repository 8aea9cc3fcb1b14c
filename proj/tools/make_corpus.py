#!/usr/bin/env python3
# Copyright (c) 2026, poslab authors
# SPDX-License-Identifier: Apache-2.0
"""Build the bundled toy corpus from the Python reference documentation.

The text comes from the pydoc topic index shipped with every CPython install
(pydoc_data/topics.py) followed by the docstrings of the pure standard library
modules, their classes, functions and methods (Python Software Foundation
License). Topics and modules are visited in sorted order and whitespace runs
are collapsed to single spaces, so the output is deterministic for a given
Python version.
"""

import argparse
import contextlib
import importlib
import inspect
import io
import pathlib
import pkgutil
import re
import sys
import sysconfig
import warnings

import pydoc_data.topics

SKIP = {"antigravity", "this", "idlelib", "tkinter", "turtle", "turtledemo", "test",
        "lib2to3", "ensurepip", "venv", "pydoc_data"}


def stdlib_modules() -> list[str]:
    stdlib = pathlib.Path(sysconfig.get_paths()["stdlib"]).resolve()
    names = []
    for info in pkgutil.iter_modules([str(stdlib)]):
        if info.name.startswith("_") or info.name in SKIP:
            continue
        names.append(info.name)
    return sorted(names)


def docstrings(name: str) -> list[str]:
    try:
        with warnings.catch_warnings(), contextlib.redirect_stdout(io.StringIO()), \
                contextlib.redirect_stderr(io.StringIO()):
            warnings.simplefilter("ignore")
            module = importlib.import_module(name)
    except BaseException:
        return []
    out = [inspect.getdoc(module) or ""]
    for _, obj in sorted(vars(module).items()):
        if getattr(obj, "__module__", None) != name:
            continue
        if inspect.isfunction(obj):
            out.append(inspect.getdoc(obj) or "")
        elif inspect.isclass(obj):
            out.append(inspect.getdoc(obj) or "")
            for _, member in sorted(vars(obj).items()):
                if inspect.isfunction(member) and member.__doc__:
                    out.append(inspect.cleandoc(member.__doc__))
    return [d for d in out if d]


def build() -> str:
    topics = pydoc_data.topics.topics
    parts = [topics[key] for key in sorted(topics)]
    for name in stdlib_modules():
        parts.extend(docstrings(name))
    text = "\n".join(parts)
    return re.sub(r"\s+", " ", text).strip() + "\n"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("output", type=pathlib.Path, nargs="?",
                        default=pathlib.Path(__file__).resolve().parent.parent / "data" / "corpus.txt")
    args = parser.parse_args()
    text = build()
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(text, encoding="utf-8")
    print(f"wrote {len(text.encode('utf-8'))} bytes to {args.output} "
          f"(python {sys.version_info.major}.{sys.version_info.minor})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
