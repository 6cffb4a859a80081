from data_science.src.config.run_config import (RunConfig, DatasetConfig, WindowConfig, SplitConfig, PretrainSection,
                                                FinetuneSection, ProtocolConfig, PRESETS, PROTOCOLS, SCHEMA_VERSION,
                                                load_run_config, resolve_run_config, flatten_defaults,
                                                parse_override, build_dataclass)

__all__ = ['RunConfig', 'DatasetConfig', 'WindowConfig', 'SplitConfig', 'PretrainSection', 'FinetuneSection',
           'ProtocolConfig', 'PRESETS', 'PROTOCOLS', 'SCHEMA_VERSION', 'load_run_config', 'resolve_run_config',
           'flatten_defaults', 'parse_override', 'build_dataclass']
