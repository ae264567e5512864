from .common import natural_gradient_estimate, proj_ball
from .double_loop import DoubleLoopHyper, double_loop_train
from .ssac import SsacHyper, ssac_train
from .trace import COLUMNS, RunTrace
from .zeroth_order import ZeroOrderHyper, zeroth_order_train

__all__ = [
    "COLUMNS",
    "DoubleLoopHyper",
    "RunTrace",
    "SsacHyper",
    "ZeroOrderHyper",
    "double_loop_train",
    "natural_gradient_estimate",
    "proj_ball",
    "ssac_train",
    "zeroth_order_train",
]
