from .demand import DemandModel
from .dualsource import DsParams, DualSourcingEnv
from .inventory import InventoryEnv, InvParams
from .queue import QueueEnv, QueueParams

__all__ = ["DemandModel", "DsParams", "DualSourcingEnv", "InvParams", "InventoryEnv", "QueueEnv", "QueueParams"]
