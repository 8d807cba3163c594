from .monitoring import measure_latency

__all__ = ["measure_latency"]
