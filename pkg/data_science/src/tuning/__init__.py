from data_science.src.tuning.adam_optimizer import OptimizerState, adam_step
from data_science.src.tuning.run_log import RunLog
from data_science.src.tuning.pretrainer import PretrainConfig, PretrainResult, Pretrainer, reconstruction_error
from data_science.src.tuning.fine_tuner import FinetuneConfig, FinetuneResult, FineTuner

__all__ = ['OptimizerState', 'adam_step', 'RunLog', 'PretrainConfig', 'PretrainResult', 'Pretrainer',
           'reconstruction_error', 'FinetuneConfig', 'FinetuneResult', 'FineTuner']
