from .bench import COMMANDS, configure_logging
from .tools.utils.bench_config import BenchConfig

__all__ = ['BenchConfig', 'COMMANDS', 'configure_logging']
