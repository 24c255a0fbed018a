"""Prior-fitted node classification: synthetic graph priors, a dual-branch
attention + message-passing model, training-free inference and baselines.

The heavy lifting lives in the compiled extension; this package re-exports it.
"""

from nodepfn._nodepfn import (
    ValidationError,
    NumericalError,
    sample_task,
    edge_homophily,
    train,
    predict,
    label_propagation,
    closed_form_classify,
    exact_ppd,
    write_dataset,
    read_dataset,
    inspect_checkpoint,
)

__all__ = [
    "ValidationError",
    "NumericalError",
    "sample_task",
    "edge_homophily",
    "train",
    "predict",
    "label_propagation",
    "closed_form_classify",
    "exact_ppd",
    "write_dataset",
    "read_dataset",
    "inspect_checkpoint",
]
