from data_science.src.evaluation.metrics import (macro_f1, confidence_interval, predict, evaluate, MetricsReport,
                                                 CONFIDENCE_LEVEL)
from data_science.src.evaluation.reports import (ProtocolTable, write_report, load_report, report_name,
                                                 REPORT_JSON, REPORT_CSV)

__all__ = ['macro_f1', 'confidence_interval', 'predict', 'evaluate', 'MetricsReport', 'CONFIDENCE_LEVEL',
           'ProtocolTable', 'write_report', 'load_report', 'report_name', 'REPORT_JSON', 'REPORT_CSV']
