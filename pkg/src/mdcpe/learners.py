"""Thin wrappers binding each network to its data view.

The co-training engine only ever sees coordinates, probabilities and
features through these; ground-truth labels never flow through prediction.
"""

import numpy as np

from . import cnn, rnn
from .preprocess import extract_patch


class SpectralLearner:
    """GRU classifier over per-pixel spectra of the normalized cube."""

    def __init__(self, model, cube):
        self.model = model
        self.cube = cube

    def _spectrum(self, coord):
        return self.cube[coord[0], coord[1], :]

    def train(self, samples, epochs, learning_rate, batch_size, rng):
        spectra = [self._spectrum((r, c)) for r, c, _ in samples]
        labels = [lbl - 1 for _, _, lbl in samples]
        return rnn.rnn_train(self.model, spectra, labels, epochs,
                             learning_rate, batch_size, rng)

    def predict_batch(self, coords):
        k = self.model.k
        probs = np.empty((len(coords), k))
        feats = np.empty((len(coords), k))
        for i, coord in enumerate(coords):
            feats[i] = rnn.rnn_features(self._spectrum(coord), self.model)
            probs[i] = rnn.rnn_predict(self._spectrum(coord), self.model)
        labels = probs.argmax(axis=1) + 1
        return labels, probs, feats

    def checkpoint(self):
        return self.model.params.copy()

    def restore(self, params):
        self.model.params.load_values(params)


class SpatialLearner:
    """3-D CNN classifier over mirror-padded patches of the PCA-reduced cube."""

    def __init__(self, model, reduced, dropout_rate):
        self.model = model
        self.reduced = reduced
        self.dropout_rate = dropout_rate

    def _patch(self, coord):
        return extract_patch(self.reduced, coord[0], coord[1],
                             self.model.patch_size)

    def train(self, samples, epochs, learning_rate, batch_size, rng):
        patches = [self._patch((r, c)) for r, c, _ in samples]
        labels = [lbl - 1 for _, _, lbl in samples]
        return cnn.cnn_train(self.model, patches, labels, epochs,
                             learning_rate, batch_size, self.dropout_rate, rng)

    def predict_batch(self, coords):
        k = self.model.k
        probs = np.empty((len(coords), k))
        feats = np.empty((len(coords), k))
        for i, coord in enumerate(coords):
            logits = cnn.cnn_features(self._patch(coord), self.model)
            feats[i] = logits
            e = np.exp(logits - logits.max())
            probs[i] = e / e.sum()
        labels = probs.argmax(axis=1) + 1
        return labels, probs, feats

    def checkpoint(self):
        return self.model.params.copy()

    def restore(self, params):
        self.model.params.load_values(params)
