from .tables import Table, QueryResult, load_csv, infer_value_type
from .executor import Executor, OverrideSet, plan_to_export

__all__ = [
    "Table", "QueryResult", "load_csv", "infer_value_type",
    "Executor", "OverrideSet", "plan_to_export",
]
