"""Executable reductions: deterministic channels recover standard MaxEnt,
perfectly-observed-Y channels recover latent MaxEnt.

Both reductions are verified numerically rather than assumed: the standard
one by comparing the EM solution with the direct dual solve (plus the
vanishing extra gradient term of the full Lagrangian), the latent one as a
pointwise identity on E-step outputs.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .dual import SolverConfig, TargetExpectations, minimize_dual
from .em import UMaxEntProblem, e_step, em_solve
from .errors import PreconditionViolated, ValidationError, ZeroMarginal
from .model import (
    Distribution,
    EmpiricalObservations,
    ElementSpace,
    FeatureTable,
    ObservationChannel,
    Weights,
    feature_expectation,
    log_linear_distribution,
)


@dataclass
class DeterminismReport:
    """Whether posteriors are point masses for the given model, and whether
    the channel's disjoint column supports make that hold for every model."""

    point_mass_posteriors: bool
    model_independent: bool

    def __bool__(self):
        return self.point_mass_posteriors


def has_disjoint_column_supports(channel):
    """True when every observation is supported by at most one element."""
    support = channel.matrix > 0
    return bool(np.all(support.sum(axis=1) <= 1))


def is_deterministic_channel(channel, model, atol=1e-12):
    """Test whether each observation pins down a single element.

    Checks that every posterior under the given model is a point mass
    (entries within atol of 0 or 1); observations with zero marginal are
    vacuous. Also reports whether the channel's column supports are
    disjoint, in which case the property holds for every model.
    """
    marg = channel.matrix @ model.probs
    point_mass = True
    for w in range(channel.n_observations):
        if marg[w] <= 0:
            continue
        post = channel.matrix[w] * model.probs / marg[w]
        if not np.all((post < atol) | (np.abs(post - 1.0) < atol)):
            point_mass = False
            break
    return DeterminismReport(point_mass, has_disjoint_column_supports(channel))


def solve_standard_maxent(empirical_x, features, config=None):
    """Standard MaxEnt: match the directly observed empirical expectations."""
    target = TargetExpectations(feature_expectation(empirical_x, features))
    return minimize_dual(target, features, config=config or SolverConfig())


def lagrangian_extra_term(problem, weights):
    """Per-element value of the non-linear term in the full Lagrangian gradient.

    This is the term the log-linear approximation discards; under a
    deterministic channel it vanishes identically. Observations with zero
    marginal under the model are skipped.
    """
    model = log_linear_distribution(weights, problem.features)
    marg = problem.channel.matrix @ model.probs
    tilde = problem.empirical.probs
    n = problem.features.n_elements
    out = np.zeros(n)
    ch = problem.channel.matrix
    for w in np.flatnonzero(marg > 0):
        # (Pr(w|X) Pr(w) - Pr(w|X)^2 Pr(X)) / Pr(w)^2, weighted by Pr~(w)
        frac = (ch[w] * marg[w] - ch[w] ** 2 * model.probs) / marg[w] ** 2
        out += tilde[w] * frac * (weights.lam @ problem.features.values)
    return out


@dataclass
class ReductionReport:
    reduction: str
    tv_distance: float = None
    residual: float = None
    extra_term_norm: float = None
    identity_gap: float = None
    iterations: int = None

    def to_json(self):
        return json.dumps(
            {
                "reduction": self.reduction,
                "tv_distance": self.tv_distance,
                "residual": self.residual,
                "extra_term_norm": self.extra_term_norm,
                "identity_gap": self.identity_gap,
                "iterations": self.iterations,
            },
            indent=2,
        )


def induced_empirical_x(problem):
    """Merge observation mass onto the unique supporting element per observation."""
    if not has_disjoint_column_supports(problem.channel):
        raise PreconditionViolated("channel columns do not have disjoint supports")
    n = problem.channel.n_elements
    mass = np.zeros(n)
    for w, p in enumerate(problem.empirical.probs):
        support = np.flatnonzero(problem.channel.matrix[w] > 0)
        if support.size == 0:
            if p > 0:
                raise ZeroMarginal(w)
            continue
        mass[support[0]] += p
    return Distribution(mass)


def verify_maxent_reduction(problem, config=None, n_random_lambda=100, seed=0):
    """Check that EM on a deterministic channel matches the direct dual solve.

    Reports the total-variation distance between the two solutions and the
    sup-norm of the Lagrangian's extra gradient term at random weights.
    """
    from .em import EmConfig

    config = config or EmConfig()
    empirical_x = induced_empirical_x(problem)

    weights_em, trace = em_solve(problem, config)
    dist_em = log_linear_distribution(weights_em, problem.features)
    direct = solve_standard_maxent(empirical_x, problem.features, config.inner)
    dist_direct = log_linear_distribution(direct.weights, problem.features)
    tv = 0.5 * float(np.abs(dist_em.probs - dist_direct.probs).sum())

    rng = np.random.default_rng(seed)
    k = problem.features.n_features
    term_norm = 0.0
    for _ in range(n_random_lambda):
        lam = Weights(rng.uniform(-2, 2, size=k))
        term_norm = max(term_norm, float(np.abs(lagrangian_extra_term(problem, lam)).max()))

    return ReductionReport(
        "standard",
        tv_distance=tv,
        residual=trace.rows[-1].residual,
        extra_term_norm=term_norm,
        iterations=len(trace) - 1,
    )


@dataclass(frozen=True, eq=False)
class LatentFactorization:
    """Split of each element into an observed Y part and a hidden Z part.

    embed maps valid (y_index, z_index) pairs injectively onto element
    indices and must cover the whole element set.
    """

    y_space: tuple
    z_space: tuple
    embed: dict  # (y_idx, z_idx) -> element index
    n_elements: int

    def __init__(self, y_space, z_space, embed, n_elements):
        y_space, z_space = tuple(y_space), tuple(z_space)
        embed = dict(embed)
        targets = list(embed.values())
        if len(set(targets)) != len(targets):
            raise ValidationError("factorization embed must be injective")
        if sorted(targets) != list(range(n_elements)):
            raise ValidationError("factorization must cover every element exactly once")
        for (yi, zi) in embed:
            if not (0 <= yi < len(y_space) and 0 <= zi < len(z_space)):
                raise ValidationError(f"embed key ({yi}, {zi}) out of range")
        object.__setattr__(self, "y_space", y_space)
        object.__setattr__(self, "z_space", z_space)
        object.__setattr__(self, "embed", embed)
        object.__setattr__(self, "n_elements", n_elements)

    def completions(self, y_idx):
        """Valid hidden completions Z_Y for a given observed part."""
        return [zi for (yi, zi) in self.embed if yi == y_idx]

    def y_of_element(self):
        """Element index -> Y index lookup."""
        out = np.empty(self.n_elements, dtype=int)
        for (yi, _zi), x in self.embed.items():
            out[x] = yi
        return out

    def y_channel(self):
        """Channel with Omega = Y: Pr(omega | X) = 1 iff X's Y part is omega."""
        matrix = np.zeros((len(self.y_space), self.n_elements))
        matrix[self.y_of_element(), np.arange(self.n_elements)] = 1.0
        return ObservationChannel(matrix, observation_names=self.y_space)


def latent_constraint_rhs(fact, empirical_y, model, features):
    """Right-hand side of the latent MaxEnt constraints under the given model.

    rhs_k = sum_Y Pr~(Y) sum_{Z in Z_Y} Pr(Z | Y) phi_k(X), with
    Pr(Z | Y) the model's conditional over completions of Y.
    """
    if features.n_elements != fact.n_elements:
        raise ValidationError("feature table does not match factorization size")
    rhs = np.zeros(features.n_features)
    for yi, p_y in enumerate(empirical_y.probs):
        xs = [fact.embed[(yi, zi)] for zi in fact.completions(yi)]
        mass = model.probs[xs].sum()
        if mass <= 0:
            if p_y > 0:
                raise ZeroMarginal(yi)
            continue
        cond = model.probs[xs] / mass
        rhs += p_y * (features.values[:, xs] @ cond)
    return rhs


def verify_latent_reduction(fact, empirical_y, features, config=None,
                            n_models=100, seed=0, identity_atol=1e-12):
    """Check the latent reduction as a pointwise identity on E-step outputs.

    Builds the Y-observing channel, compares e_step against
    latent_constraint_rhs at random log-linear models, then runs EM and
    reports the converged residual.
    """
    from .em import EmConfig

    config = config or EmConfig()
    channel = fact.y_channel()
    space = ElementSpace(range(fact.n_elements))
    problem = UMaxEntProblem(space, features, channel, EmpiricalObservations(empirical_y))

    rng = np.random.default_rng(seed)
    gap = 0.0
    for _ in range(n_models):
        lam = Weights(rng.uniform(-2, 2, size=features.n_features))
        model = log_linear_distribution(lam, features)
        lhs = e_step(problem, lam).phi_hat
        rhs = latent_constraint_rhs(fact, empirical_y, model, features)
        gap = max(gap, float(np.abs(lhs - rhs).max()))
    if gap > identity_atol:
        raise PreconditionViolated(
            f"latent identity violated: max gap {gap} exceeds {identity_atol}"
        )

    _, trace = em_solve(problem, config)
    return ReductionReport(
        "latent",
        residual=trace.rows[-1].residual,
        identity_gap=gap,
        iterations=len(trace) - 1,
    )
