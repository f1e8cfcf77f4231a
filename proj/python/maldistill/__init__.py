"""Malware detection with knowledge distillation.

Thin Python layer over the native core: featurizers, distillation losses,
metrics, the sandbox-pool simulation and the command-line pipeline.
"""

import json as _json

from . import _core
from ._core import (
    api_arg_tokens,
    attempts_distribution,
    builtin_spec_names,
    ce_loss,
    ember_lite,
    hash_vectorize,
    kd_kl_term,
    kd_loss,
    kd_loss_grad,
    kd_mse_term,
    length_chain,
    murmur3_32,
    predict,
    softmax_tau,
)

__all__ = [
    "api_arg_tokens",
    "attempts_distribution",
    "builtin_spec_names",
    "ce_loss",
    "cli",
    "ember_lite",
    "generate_synthetic",
    "hash_vectorize",
    "kd_kl_term",
    "kd_loss",
    "kd_loss_grad",
    "kd_mse_term",
    "length_chain",
    "metrics",
    "metrics_from_counts",
    "murmur3_32",
    "predict",
    "simulate",
    "softmax_tau",
    "spec",
]


def metrics(predictions, labels):
    """Accuracy, F1, FPR and FNR with malicious (1) as the positive class."""
    return _json.loads(_core.metrics_json(list(predictions), list(labels)))


def metrics_from_counts(tp, fp, tn, fn):
    return _json.loads(_core.metrics_from_counts_json(tp, fp, tn, fn))


def spec(name_or_path):
    """Architecture spec document of a builtin name or a JSON spec file."""
    return _json.loads(_core.spec_json(name_or_path))


def generate_synthetic(out_dir, **spec):
    """Writes a synthetic multi-view dataset to `out_dir`; returns its size."""
    return _core.generate_synthetic(_json.dumps(spec), str(out_dir))


def simulate(**config):
    """Runs the sandbox-pool simulation and returns its summary."""
    return _json.loads(_core.simulate_json(_json.dumps(config)))


def cli(*args):
    """Runs one CLI subcommand in-process. Returns (status, stdout, stderr)."""
    return _core.cli([str(a) for a in args])
