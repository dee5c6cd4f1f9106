"""Seeded instance generators shared across the test suite."""

from __future__ import annotations

import numpy as np

from privbound.model import Component, Problem, User, user_weight_mass
from privbound.probcore import Joint2, mutual_information


def random_joint(rng: np.random.Generator, nx: int, ny: int) -> Joint2:
    """Dense random joint (flat Dirichlet over all cells)."""
    return Joint2(rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny))


def random_component(rng: np.random.Generator, name: str, max_card: int = 3) -> Component:
    nx = int(rng.integers(2, max_card + 1))
    ny = int(rng.integers(2, max_card + 1))
    return Component(name, random_joint(rng, nx, ny))


def random_users(rng: np.random.Generator, n: int, max_k: int = 3) -> tuple[User, ...]:
    k = int(rng.integers(1, max_k + 1))
    users = []
    for _ in range(k):
        size = int(rng.integers(1, n + 1))
        demands = tuple(int(i) for i in rng.choice(n, size=size, replace=False))
        users.append(User(demands=demands, weight=float(rng.uniform(0.1, 2.0))))
    return tuple(users)


def random_problem(
    seed: int,
    max_n: int = 3,
    max_card: int = 3,
    max_k: int = 3,
    eps_frac: float = 0.9,
) -> Problem:
    """A random dense problem with eps drawn uniformly in [0, eps_frac * sum I)."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_n + 1))
    comps = tuple(random_component(rng, f"c{i}", max_card) for i in range(n))
    users = random_users(rng, n, max_k)
    total_mi = sum(mutual_information(c.joint) for c in comps)
    eps = float(rng.uniform(0.0, eps_frac * total_mi))
    return Problem(comps, users, eps)


def deterministic_component(rng: np.random.Generator, name: str) -> Component:
    """X = f(Y) with a random surjective f and a random Y marginal."""
    ny = int(rng.integers(2, 5))
    nx = int(rng.integers(2, ny + 1))
    f = np.concatenate([np.arange(nx), rng.integers(0, nx, ny - nx)])
    rng.shuffle(f)
    py = rng.dirichlet(np.ones(ny))
    table = np.zeros((nx, ny))
    table[f, np.arange(ny)] = py
    return Component(name, Joint2(table))


def deterministic_problem(seed: int, eps_frac: float = 0.9) -> Problem:
    """X_i = f_i(Y_i) everywhere; eps kept inside the single-target regime.

    The exact closed form (and the one-component budget placement behind
    it) is valid while eps fits on the component with the largest weight
    mass, so eps is drawn in [0, eps_frac * I(argmax mu)).
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    comps = tuple(deterministic_component(rng, f"c{i}") for i in range(n))
    users = random_users(rng, n)
    problem = Problem(comps, users, 0.0)
    mu = user_weight_mass(problem)
    target = int(np.argmax(mu))
    cap = mutual_information(comps[target].joint)
    eps = float(rng.uniform(0.0, eps_frac * cap))
    return Problem(comps, users, eps)


def binary_y_component(seed: int) -> Component:
    """A random dense component with |Y| = 2."""
    rng = np.random.default_rng(seed)
    nx = int(rng.integers(2, 4))
    return Component("b", random_joint(rng, nx, 2))


def xy_copy_component(name: str = "copy", p0: float = 0.5) -> Component:
    """X = Y binary with P(Y=0) = p0."""
    return Component(name, Joint2(np.array([[p0, 0.0], [0.0, 1.0 - p0]])))


def bsc_component(theta: float = 0.1, name: str = "bsc") -> Component:
    """Uniform binary input through a binary symmetric channel."""
    return Component(
        name,
        Joint2(np.array([[(1 - theta) / 2, theta / 2], [theta / 2, (1 - theta) / 2]])),
    )
