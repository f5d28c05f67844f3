"""Scikit-learn style front end so the detector composes with sklearn
pipelines and model selection: fit on SamplePairs (or (rgb, aux, gt)
triples), predict saliency maps at the original image resolution."""

import numpy as np
from sklearn.base import BaseEstimator

from .config import RunConfig
from .data import SamplePair
from .metrics import evaluate_pair
from .training import predict as run_predict
from .training import train as run_train


def _as_sample(x, i):
    if isinstance(x, SamplePair):
        x.validate()
        return x
    rgb, aux, gt = x
    rgb = np.asarray(rgb, dtype=np.float64)
    aux = np.asarray(aux, dtype=np.float64)
    if aux.ndim == 2:
        aux = aux[None]
    if aux.shape[0] == 1:
        aux = np.repeat(aux, 3, axis=0)
    gt = (np.asarray(gt, dtype=np.float64) >= 0.5).astype(np.float64)
    sample = SamplePair(rgb=rgb, aux=aux, gt=gt, id=f"sample_{i:04d}")
    sample.validate()
    return sample


class SammeseSaliency(BaseEstimator):
    """Multi-modal salient-object detector with a frozen promptable
    segmentation backbone and trainable fusion/adapter/prompt components.

    Parameters mirror the run configuration; `fit` trains the learnable
    components, `predict` returns one saliency map per input pair, resized
    back to each pair's native resolution.
    """

    def __init__(
        self,
        sam_input_size=64,
        mcfm_input_size=64,
        encoder_blocks=2,
        encoder_dim=32,
        pyramid_widths=(16, 32, 64, 128),
        num_queries=30,
        bottleneck_dim=0,
        learning_rate=1e-3,
        batch_size=2,
        epochs=5,
        seed=0,
        backend="stub",
    ):
        self.sam_input_size = sam_input_size
        self.mcfm_input_size = mcfm_input_size
        self.encoder_blocks = encoder_blocks
        self.encoder_dim = encoder_dim
        self.pyramid_widths = pyramid_widths
        self.num_queries = num_queries
        self.bottleneck_dim = bottleneck_dim
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed
        self.backend = backend

    def _config(self) -> RunConfig:
        return RunConfig(
            sam_input_size=self.sam_input_size,
            mcfm_input_size=self.mcfm_input_size,
            encoder_blocks=self.encoder_blocks,
            encoder_dim=self.encoder_dim,
            pyramid_widths=tuple(self.pyramid_widths),
            num_queries=self.num_queries,
            bottleneck_dim=self.bottleneck_dim,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
            backend=self.backend,
        )

    def fit(self, X, y=None):
        """X: sequence of SamplePair or (rgb [3,H,W], aux, gt [H,W]) triples."""
        samples = [_as_sample(x, i) for i, x in enumerate(X)]
        if not samples:
            raise ValueError("fit requires at least one sample")
        self.config_ = self._config()
        self.model_, self.history_ = run_train(self.config_, samples)
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")

    def predict(self, X):
        """Saliency maps in [0,1], one per pair, at native resolution."""
        self._check_fitted()
        samples = [_as_sample(x, i) for i, x in enumerate(X)]
        maps = []
        for sample, (_, m_sal, _, _) in zip(samples, run_predict(self.model_, samples)):
            h, w = sample.gt.shape
            if m_sal.shape != (h, w):
                rows = (np.arange(h) * m_sal.shape[0] / h).astype(int)
                cols = (np.arange(w) * m_sal.shape[1] / w).astype(int)
                m_sal = m_sal[np.ix_(rows, cols)]
            maps.append(m_sal)
        return maps

    def score(self, X, y=None):
        """Mean S-measure of predictions against the samples' ground truth."""
        self._check_fitted()
        samples = [_as_sample(x, i) for i, x in enumerate(X)]
        scores = []
        for sample, m in zip(samples, self.predict(samples)):
            scores.append(evaluate_pair(m, sample.gt)["s_measure"])
        return float(np.mean(scores))
