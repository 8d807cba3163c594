from .config import ConfigError, ExperimentConfig, build_config, load_config, parse_config_text, parse_overrides
from .commands import cmd_compare, cmd_eval, cmd_histogram, cmd_sweep, cmd_train

__all__ = [
    'ConfigError', 'ExperimentConfig', 'build_config', 'cmd_compare', 'cmd_eval', 'cmd_histogram',
    'cmd_sweep', 'cmd_train', 'load_config', 'parse_config_text', 'parse_overrides',
]
