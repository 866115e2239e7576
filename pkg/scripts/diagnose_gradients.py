"""
Gradient integrity report: analytic gradients vs central finite differences
for every layer type and every Consensus Network loss path.

Usage:
    python scripts/diagnose_gradients.py
    python scripts/diagnose_gradients.py --configs 20 --seed 3
"""
import sys
import os
import argparse
import logging
from collections import defaultdict

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
from dotenv import load_dotenv
load_dotenv()

import numpy as np

from src.engine.consensus import ConsensusModel, classifier_loss, discriminator_loss, encode_all, sample_noise
from src.engine.layers import BatchNormLayer, DenseLayer
from src.engine.losses import softmax_cross_entropy
from src.engine.network import build_mlp
from src.engine.partition import ModalityPartition
from src.services.config_factory import ModelConfig
from src.services.partition_service import random_partition
from src.utils.gradcheck import check_gradients

logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

THRESHOLD = 1e-4


def _layer_errors(layer, X, rng):
    """Loss = sum(out * R) for a fixed random R, so d_out = R."""
    R = rng.standard_normal(layer.forward(X).shape)
    loss_fn = lambda: float(np.sum(layer.forward(X, update_stats=False) * R))
    layer.forward(X, update_stats=False)
    d_x = layer.backward(R)
    errors = check_gradients(loss_fn, layer.params, dict(layer.grads))
    errors.update(check_gradients(loss_fn, {"input": X}, {"input": d_x}))
    return errors


def check_dense(rng):
    layer = DenseLayer(int(rng.integers(1, 6)), int(rng.integers(1, 6)), rng)
    layer.params["bias"] = rng.standard_normal(layer.out_dim)
    return _layer_errors(layer, rng.standard_normal((int(rng.integers(1, 5)), layer.in_dim)), rng)


def check_batchnorm(rng):
    dim = int(rng.integers(1, 6))
    layer = BatchNormLayer(dim)
    layer.params["gamma"] = rng.uniform(0.5, 2.0, dim)
    layer.params["beta"] = rng.standard_normal(dim)
    return _layer_errors(layer, rng.standard_normal((int(rng.integers(3, 8)), dim)) * 2.0, rng)


def check_mlp(rng):
    in_dim, out_dim = int(rng.integers(2, 6)), int(rng.integers(2, 5))
    net = build_mlp(in_dim, [int(rng.integers(2, 6))], out_dim, rng)
    X = rng.standard_normal((int(rng.integers(3, 8)), in_dim))
    y = rng.integers(0, out_dim, X.shape[0])
    loss_fn = lambda: softmax_cross_entropy(net.forward(X, update_stats=False), y)[0]
    _, d_logits = softmax_cross_entropy(net.forward(X, update_stats=False), y)
    net.backward(d_logits)
    return check_gradients(loss_fn, dict(net.named_arrays()), net.named_grads())


def _random_model(rng, noise_enabled=True):
    M = int(rng.integers(2, 4))
    partition: ModalityPartition = random_partition(int(rng.integers(M, M + 6)), M, int(rng.integers(1 << 30)))
    config = ModelConfig(representation_dim=int(rng.integers(2, 5)), hidden_dim=int(rng.integers(2, 5)))
    model = ConsensusModel(partition, int(rng.integers(2, 4)), config, noise_enabled, rng)
    X = rng.standard_normal((int(rng.integers(3, 7)), partition.total_dims))
    return model, X


def check_classifier_path(rng, cooperative: bool):
    model, X = _random_model(rng)
    y = rng.integers(0, model.n_classes, X.shape[0])
    loss_fn = lambda: classifier_loss(model, encode_all(model, X, update_stats=False), y)[0]
    _, grads = classifier_loss(model, encode_all(model, X, update_stats=False), y, cooperative=cooperative)
    analytic = dict(grads.classifier)
    if cooperative:
        for g in grads.ephysicians:
            analytic.update(g)
        return check_gradients(loss_fn, model.named_arrays(), analytic)
    # without cooperation the ePhysician gradients must be exactly zero
    errors = check_gradients(loss_fn, model.named_arrays(), analytic)
    errors["ephysicians_zero"] = max(float(np.max(np.abs(v))) for g in grads.ephysicians for v in g.values())
    return errors


def check_discriminator_path(rng):
    model, X = _random_model(rng, noise_enabled=bool(rng.integers(0, 2)))
    reps = encode_all(model, X, update_stats=False)
    noise = sample_noise(model, reps, rng) if model.noise_enabled else None
    loss_fn = lambda: discriminator_loss(model, encode_all(model, X, update_stats=False), noise)[0]
    _, grads = discriminator_loss(model, reps, noise, backprop_ephysicians=True)
    analytic = dict(grads.discriminator)
    for g in grads.ephysicians:
        analytic.update(g)
    return check_gradients(loss_fn, model.named_arrays(), analytic)


CHECKS = {
    "dense": check_dense,
    "batchnorm": check_batchnorm,
    "mlp": check_mlp,
    "L_C cooperative": lambda rng: check_classifier_path(rng, True),
    "L_C non-cooperative": lambda rng: check_classifier_path(rng, False),
    "L_D": check_discriminator_path,
}


def gradient_report(n_configs: int, seed: int):
    worst = defaultdict(float)
    for name, check in CHECKS.items():
        for i in range(n_configs):
            rng = np.random.default_rng([seed, i])
            errors = check(rng)
            worst[name] = max(worst[name], max(errors.values()))
    return dict(worst)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--configs", type=int, default=100, help="random configurations per check")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    report = gradient_report(args.configs, args.seed)
    failed = False
    for name, err in report.items():
        ok = err < THRESHOLD
        failed |= not ok
        print(f"{'✅' if ok else '❌'} {name:22s} max relative error {err:.2e}")
    sys.exit(1 if failed else 0)
