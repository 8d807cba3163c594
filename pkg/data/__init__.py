from .datasets import (
    LabeledDataset,
    LayoutError,
    OpenSetSplit,
    PartitionError,
    PartitionSpec,
    export_csv,
    gen_gaussian_mixture,
    partition,
    subsample_per_class,
)
from .idx import IdxErrorCode, IdxFormatError, load_idx, read_idx, write_idx

__all__ = [
    'IdxErrorCode', 'IdxFormatError', 'LabeledDataset', 'LayoutError', 'OpenSetSplit',
    'PartitionError', 'PartitionSpec', 'export_csv', 'gen_gaussian_mixture', 'load_idx',
    'partition', 'read_idx', 'subsample_per_class', 'write_idx',
]
