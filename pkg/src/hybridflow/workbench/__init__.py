from .benches import (
    LifecycleConfigResult, ScaleRun, bench_lifecycle, bench_scalability,
    crossover_table,
)
from .config import BenchConfig, load_config
from .reports import BalanceReport, CsvLog, GainReport, gain
from .simoracle import ListScheduleSim, oracle_simulate, uc1_makespan, uc2_gain_model
from .usecases import (
    Stack, UC1Result, UC2Result, UC3Result, UC4Result, uc1_continuous,
    uc2_async_exchange, uc3_external_stream, uc4_nested,
)

__all__ = [
    "BalanceReport", "BenchConfig", "CsvLog", "GainReport", "gain",
    "ListScheduleSim", "oracle_simulate", "uc1_makespan", "uc2_gain_model",
    "Stack", "UC1Result", "UC2Result", "UC3Result", "UC4Result",
    "uc1_continuous", "uc2_async_exchange", "uc3_external_stream", "uc4_nested",
    "LifecycleConfigResult", "ScaleRun", "bench_lifecycle", "bench_scalability",
    "crossover_table", "load_config",
]
