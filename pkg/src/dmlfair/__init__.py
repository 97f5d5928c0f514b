"""Fair regression by partialling sensitive attributes out of tabular data.

Workflow: tag columns as sensitive / non-sensitive / outcome, cross-fit
nuisance models of every non-sensitive column and the outcome on the
sensitive ones, fit any regressor on the residuals, then recenter
predictions against a declared base-case profile. The simulation lab
provides ground-truth counterfactuals for evaluating the result.
"""

from .errors import (
    DmlfairError,
    InputError,
    ParseError,
    SchemaMismatchError,
    SingularityError,
)
from .fairmetrics import (
    AdjustmentTree,
    CfErrorReport,
    GroupStats,
    adjustment_tree,
    bootstrap_ci,
    cf_error,
    group_stats,
)
from .learners import (
    FittedModel,
    ForestModel,
    LearnerSpec,
    LinearModel,
    TreeModel,
    fit,
    fit_forest,
    fit_linear,
    fit_tree,
)
from .orthogonal import (
    NuisanceSet,
    Residuals,
    crossfit_nuisance,
    nuisance_predict_avg,
    residualize,
)
from .persist import load_model, save_model
from .pipeline import (
    BaseCase,
    DecisionRule,
    DmlFairModel,
    RegularizedModel,
    RegularizedSpec,
    UnawareModel,
    apply_decision_rule,
    group_base_case_predictions,
    predict,
    train,
    train_regularized,
    train_unaware,
    warn_small_groups,
)
from .simlab import LatentTable, SimConfig, counterfactual_copy, generate, regenerate
from .tabular import (
    Column,
    ColumnRole,
    Dataset,
    EncodedMatrix,
    FoldAssignment,
    Schema,
    assign_folds,
    encode_columns,
    infer_schema,
    law_school_schema,
    load_csv,
    one_hot_encode,
    schema_from_json,
    schema_to_json,
    train_test_indices,
    write_csv,
)

__version__ = "0.1.0"
