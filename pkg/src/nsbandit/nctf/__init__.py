"""Non-continuous transformer: layers, weight constructions and the rollout."""
from .constructions import Layout, cdf_attention, scheduler_stack
from .layers import AttentionLayer, Head, MLPLayer, TransformerLayer, forward, theta_norm
from .rollout import nctf_rollout

__all__ = ["Layout", "cdf_attention", "scheduler_stack", "AttentionLayer", "Head", "MLPLayer",
           "TransformerLayer", "forward", "theta_norm", "nctf_rollout"]
