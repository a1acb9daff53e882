from raincdf.errors import ConfigError
from raincdf.models.schemas import PredictorOptions

from .base import Predictor
from .baselines import HistogramPredictor, NoRainPredictor, SigmoidPredictor
from .ensemble import SimpleAveragePredictor, VotingPredictor
from .knn import KnnPredictor
from .logistic import LogisticPredictor

PREDICTORS: dict[str, type[Predictor]] = {
    cls.name.value: cls
    for cls in (
        NoRainPredictor, SigmoidPredictor, HistogramPredictor,
        SimpleAveragePredictor, VotingPredictor, LogisticPredictor, KnnPredictor,
    )
}


def make_predictor(name: str, options: PredictorOptions = PredictorOptions()) -> Predictor:
    """Instantiate an unfitted predictor by its CLI name."""
    if name not in PREDICTORS:
        raise ConfigError(f"unknown predictor {name!r}; choose from {sorted(PREDICTORS)}")
    if name == "sigmoid":
        return SigmoidPredictor(options.normalize_full_hour)
    if name == "voting":
        return VotingPredictor(options.outlier_mm, options.with_bias)
    if name == "logistic":
        return LogisticPredictor(options.train)
    if name == "knn":
        return KnnPredictor(
            k=options.k,
            p=options.p,
            leaf_size=options.leaf_size,
            standardize=options.standardize,
            threads=options.threads,
            chunk_rows=options.chunk_rows,
        )
    return PREDICTORS[name]()
