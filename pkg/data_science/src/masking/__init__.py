from data_science.src.masking.strategy_config import MaskSpec, StrategyConfig
from data_science.src.masking.mask_sampler import (sample_time_mask, sample_span_mask, sample_channel_mask,
                                                   sample_mask_spec, apply_mask, apply_mask_values,
                                                   batch_mask, mask_batch_values, mask_cells,
                                                   time_cells, channel_cells)

__all__ = [
    'MaskSpec', 'StrategyConfig', 'sample_time_mask', 'sample_span_mask', 'sample_channel_mask',
    'sample_mask_spec', 'apply_mask', 'apply_mask_values', 'batch_mask', 'mask_batch_values',
    'mask_cells', 'time_cells', 'channel_cells',
]
