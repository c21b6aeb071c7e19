"""Planning and execution of sparse tensor times tensor network kernels.

The planner enumerates contraction paths of a kernel, searches loop orders
that fuse the resulting pairwise contractions into one loop nest under a
cost model, and the executor runs the chosen nest over a CSF tensor.
"""

from .costs import CacheMisses, CostModel, DenseLoops, MaxBufferDim, MaxBufferSize, eval_cost, parse_cost_model
from .errors import (
    BudgetExceededError,
    KernelParseError,
    KernelValidationError,
    ResourceLimitError,
    SpttnError,
    TnsParseError,
    UnsupportedOrderError,
)
from .executor import ExecPlan, ExecStats, execute, execute_unfactorized, flops_estimate, prepare
from .kernel import KERNELS, KernelSpec, TensorRef, parse_kernel
from .loopnest import FusedLoopForest, build_forest, count_orders, enumerate_orders, render
from .optimizer import SearchResult, joint_search, order_dp, order_exhaustive
from .paths import ContractionPath, Term, count_paths, enumerate_paths, filter_min_depth, parse_path
from .tensor import DenseTensor, SparseTensorCOO, SparseTensorCSF, build_csf, csf_to_coo, nnz_at_level
from .tns import gen_random, read_tns, write_tns

__all__ = [
    "BudgetExceededError",
    "CacheMisses",
    "ContractionPath",
    "CostModel",
    "DenseLoops",
    "DenseTensor",
    "ExecPlan",
    "ExecStats",
    "FusedLoopForest",
    "KERNELS",
    "KernelParseError",
    "KernelSpec",
    "KernelValidationError",
    "MaxBufferDim",
    "MaxBufferSize",
    "ResourceLimitError",
    "SearchResult",
    "SparseTensorCOO",
    "SparseTensorCSF",
    "SpttnError",
    "TensorRef",
    "Term",
    "TnsParseError",
    "UnsupportedOrderError",
    "build_csf",
    "build_forest",
    "count_orders",
    "count_paths",
    "csf_to_coo",
    "enumerate_orders",
    "enumerate_paths",
    "eval_cost",
    "execute",
    "execute_unfactorized",
    "filter_min_depth",
    "flops_estimate",
    "gen_random",
    "joint_search",
    "nnz_at_level",
    "order_dp",
    "order_exhaustive",
    "parse_cost_model",
    "parse_kernel",
    "parse_path",
    "prepare",
    "read_tns",
    "render",
    "write_tns",
]
