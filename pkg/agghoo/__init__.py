import logging

__version__ = '0.1.0'

LOG_HANDLER = logging.StreamHandler()
LOG_HANDLER.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))

LOGGER = logging.getLogger('agghoo')
LOGGER.setLevel(logging.DEBUG)
LOGGER.addHandler(LOG_HANDLER)

from agghoo.core import (  # noqa: E402
    ContractViolation, Dataset, DomainError, LossSpec, Predictor, SplitPlan,
    empirical_risk, make_split_plan, n_train, point_loss,
)
from agghoo.kernel import (  # noqa: E402
    KernelModel, KernelSpec, SolveDiagnostics, SolverConfig,
    average_models, fit_kernel, gram, rkhs_norm_sq,
)
from agghoo.knn import KnnModel, knn_predict  # noqa: E402
from agghoo.select import (  # noqa: E402
    AggregateModel, RuleFamily, SelectionTrace,
    agghoo_fit, cv_select, holdout_select, majhoo_fit,
)

__all__ = [
    'AggregateModel', 'ContractViolation', 'Dataset', 'DomainError', 'KernelModel',
    'KernelSpec', 'KnnModel', 'LossSpec', 'Predictor', 'RuleFamily', 'SelectionTrace',
    'SolveDiagnostics', 'SolverConfig', 'SplitPlan',
    'agghoo_fit', 'average_models', 'cv_select', 'empirical_risk', 'fit_kernel', 'gram',
    'holdout_select', 'knn_predict', 'majhoo_fit', 'make_split_plan', 'n_train',
    'point_loss', 'rkhs_norm_sq',
]
