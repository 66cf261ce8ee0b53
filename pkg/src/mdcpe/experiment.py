"""End-to-end experiment runner: load -> normalize -> PCA -> split ->
co-train -> evaluate the best checkpoint -> write artifacts."""

import os

import numpy as np

from . import metrics, report
from .cotrain import CoTrainConfig, codecide_batch, cotrain_loop
from .dataio import (build_models, load_cube, load_labels, save_checkpoint)
from .learners import SpatialLearner, SpectralLearner
from .numerics import SeededRng
from .preprocess import (SplitSpec, minmax_normalize, pca_fit, pca_transform,
                         split_data)


def run_experiment(cfg):
    """Runs the configured pipeline; returns 0 and fills cfg.output_dir with
    metrics.csv, iteration_log.txt, map.ppm/map.png, checkpoint.mdck and a
    validation-history figure."""
    cube = load_cube(cfg.cube_path)
    gt = load_labels(cfg.labels_path)
    k = int(gt.max())

    normalized = minmax_normalize(cube)
    pca = pca_fit(normalized, cfg.pca_variance_target, cfg.pca_components)
    reduced = pca_transform(normalized, pca)

    split = split_data(gt, SplitSpec(cfg.labeled_fraction,
                                     cfg.validation_fraction, cfg.seed))

    rnn_model, cnn_model = build_models(cfg, k, reduced.shape[2], cfg.seed)
    learner1 = SpectralLearner(rnn_model, normalized)
    learner2 = SpatialLearner(cnn_model, reduced, cfg.cnn_dropout)

    co_cfg = CoTrainConfig(
        n_update=cfg.n_update,
        max_iterations=cfg.max_iterations,
        epochs1=cfg.rnn_epochs, epochs2=cfg.cnn_epochs,
        lr1=cfg.rnn_lr, lr2=cfg.cnn_lr,
        batch_size=cfg.batch_size, mode=cfg.mode)
    rng = SeededRng(cfg.seed + 1)
    state = cotrain_loop(learner1, learner2, split.labeled, split.unlabeled,
                         split.validation, co_cfg, rng, k)

    learner1.restore(state.best_params1)
    learner2.restore(state.best_params2)

    test_coords = [(r, c) for r, c, _ in split.test]
    test_truth = np.array([lbl for _, _, lbl in split.test])
    test_pred = codecide_batch(learner1, learner2, test_coords)
    cm = metrics.confusion(test_truth, test_pred, k)

    os.makedirs(cfg.output_dir, exist_ok=True)
    _write_metrics(cm, state, os.path.join(cfg.output_dir, "metrics.csv"))
    with open(os.path.join(cfg.output_dir, "iteration_log.txt"), "w",
              encoding="utf-8") as f:
        for line in state.log_lines:
            f.write(line + "\n")

    prediction_map = _full_map(learner1, learner2, gt)
    palette = metrics.default_palette(k)
    with open(os.path.join(cfg.output_dir, "map.ppm"), "wb") as f:
        f.write(metrics.render_map(prediction_map, palette))
    report.save_map_figure(metrics.label_field_to_rgb(prediction_map, palette),
                           os.path.join(cfg.output_dir, "map.png"))
    report.save_history_figure(state.history, state.best_iteration,
                               os.path.join(cfg.output_dir,
                                            "validation_history.png"))
    save_checkpoint(rnn_model, cnn_model,
                    {"best_iteration": state.best_iteration,
                     "history": state.history,
                     "seed": cfg.seed},
                    os.path.join(cfg.output_dir, "checkpoint.mdck"))
    return 0


def _write_metrics(cm, state, path):
    rows = [("oa", metrics.oa(cm)), ("aa", metrics.aa(cm)),
            ("kappa", metrics.kappa(cm))]
    per_class = metrics.per_class_accuracy(cm)
    rows += [(f"class_{i + 1}_accuracy", v) for i, v in enumerate(per_class)]
    with open(path, "w", encoding="utf-8") as f:
        f.write("metric,value\n")
        for name, value in rows:
            f.write(f"{name},{value:.6f}\n")
        f.write(f"best_iteration,{state.best_iteration}\n")


def _full_map(learner1, learner2, gt):
    coords = [(int(r), int(c)) for r, c in zip(*np.nonzero(gt > 0))]
    pred = codecide_batch(learner1, learner2, coords)
    out = np.zeros_like(gt)
    for (r, c), p in zip(coords, pred):
        out[r, c] = p
    return out
