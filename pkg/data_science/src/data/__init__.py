from data_science.src.data.recordings import (CsvSchema, RawRecording, SensorWindow, WindowSet,
                                              load_csv, write_csv)
from data_science.src.data.windowing import (SplitPolicy, SplitSpec, ChannelStatistics, segment,
                                             segment_recordings, split_by_subject, normalize,
                                             sample_per_class, inject_channel_anomaly)
from data_science.src.data.synthetic import SyntheticConfig, synth_generate, class_signal_parameters

__all__ = [
    'CsvSchema', 'RawRecording', 'SensorWindow', 'WindowSet', 'load_csv', 'write_csv',
    'SplitPolicy', 'SplitSpec', 'ChannelStatistics', 'segment', 'segment_recordings',
    'split_by_subject', 'normalize', 'sample_per_class', 'inject_channel_anomaly',
    'SyntheticConfig', 'synth_generate', 'class_signal_parameters',
]
