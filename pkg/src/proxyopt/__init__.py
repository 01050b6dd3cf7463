"""Neural-network proxies of benchmark landscapes and how PSO/GA fare on them."""

__version__ = "0.1.0"

from proxyopt.benchmarks import Benchmark, BenchmarkSpec, make_spec
from proxyopt.errors import ProxyOptError

__all__ = ["Benchmark", "BenchmarkSpec", "ProxyOptError", "make_spec", "__version__"]
