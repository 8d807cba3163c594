from .trainer import (
    Batch,
    DivergenceError,
    EpochRecord,
    FitResult,
    LossComponents,
    ModelParams,
    Phase,
    Regime,
    StepResult,
    TrainConfig,
    fit,
    full_loss,
    train_step,
    write_loss_log,
)

__all__ = [
    'Batch', 'DivergenceError', 'EpochRecord', 'FitResult', 'LossComponents', 'ModelParams',
    'Phase', 'Regime', 'StepResult', 'TrainConfig', 'fit', 'full_loss', 'train_step', 'write_loss_log',
]
