# Copyright (c) 2026, poslab authors
# SPDX-License-Identifier: Apache-2.0
"""Small transformer language models with swappable positional encodings.

Configs are dicts of dotted keys, the same keys the config files use, e.g.
``{"corpus": "data/corpus.txt", "model.strategy": "alibi"}``. Token streams
and model outputs are numpy arrays.
"""

from ._poslab import (
    ConfigError,
    ContractError,
    DimensionError,
    FormatError,
    IoError,
    PoslabError,
    TransformerLM,
    UsageError,
    alibi_bias,
    alibi_slopes,
    cli,
    evaluate_perplexity,
    load_corpus,
    per_segment_perplexity,
    positional_kinds,
    probe_layers,
    random_baseline_mad,
    resolve_config,
    run_manifest,
    shuffle_prefix_eval,
    sinusoidal_table,
    tokenize_bytes,
    train,
    wilcoxon_signed_rank_greater,
)

__all__ = [name for name in dir() if not name.startswith("_")]


def main() -> int:
    import sys

    return cli(sys.argv[1:])
