"""Shared samplers for cone members, dual members and random vectors."""

import math

import numpy as np

from conicoa.cones import ConeSpec

ALL_SPECS = [
    ConeSpec.zero(2),
    ConeSpec.nonneg(3),
    ConeSpec.soc(2),
    ConeSpec.soc(4),
    ConeSpec.exp(),
    ConeSpec.pow(0.25),
    ConeSpec.pow(0.5),
    ConeSpec.pow(0.75),
]


def spec_id(spec):
    return str(spec)


def random_vector(spec, rng, scale=3.0):
    v = rng.normal(scale=scale, size=spec.dim)
    if rng.random() < 0.2:
        v *= 10.0 ** rng.uniform(-3, 2)
    return v


def primal_sample(spec, rng):
    """A point of the cone, built directly from the defining inequality."""
    tag = spec.tag.value
    if tag == "zero":
        return np.zeros(spec.dim)
    if tag == "nonneg":
        return rng.exponential(size=spec.dim)
    if tag == "soc":
        x = rng.normal(size=spec.dim - 1)
        return np.concatenate([[np.linalg.norm(x) + rng.exponential(0.5) * rng.integers(0, 2)], x])
    if tag == "exp":
        if rng.random() < 0.1:
            return np.array([-rng.exponential(), 0.0, rng.exponential()])
        y = math.exp(rng.uniform(-2, 2))
        x = y * rng.uniform(-4, 2)
        return np.array([x, y, y * math.exp(x / y) * (1.0 + rng.exponential(0.3) * rng.integers(0, 2))])
    a = spec.alpha
    x, y = rng.exponential(size=2)
    bound = x ** a * y ** (1 - a)
    return np.array([x, y, rng.uniform(-1, 1) * bound])


def dual_sample(spec, rng):
    """A point of the dual cone, from its closed form."""
    tag = spec.tag.value
    if tag == "zero":
        return rng.normal(size=spec.dim)
    if tag in ("nonneg", "soc"):
        return primal_sample(spec, rng)
    if tag == "exp":
        if rng.random() < 0.1:
            return np.array([0.0, rng.exponential(), rng.exponential()])
        u = -math.exp(rng.uniform(-2, 2))
        v = rng.uniform(-3, 3)
        w = -u * math.exp(v / u - 1.0) * (1.0 + rng.exponential(0.3) * rng.integers(0, 2))
        return np.array([u, v, w])
    a = spec.alpha
    u, v = rng.exponential(size=2)
    bound = (u / a) ** a * (v / (1 - a)) ** (1 - a)
    return np.array([u, v, rng.uniform(-1, 1) * bound])
