from .bodygen import bodygen_features, bodygen_loglik, fit_state
from .geometry import (
    DegenerateWindowError,
    Line3,
    Parabola3,
    fit_line,
    fit_parabola,
    point_curve_distance,
    point_line_distance,
)
from .heuristics import (
    Features,
    distance_features,
    distance_loglik,
    linh_features,
    linh_loglik,
    paramh_features,
    paramh_loglik,
)
from .inference import infer, model_features, model_loglik
from .params import (
    MODEL_IDS,
    BodyGenParams,
    DistanceParams,
    LinHParams,
    ParamHParams,
    default_params,
    params_from_dict,
    params_to_dict,
)
