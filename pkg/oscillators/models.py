"""Vector fields and parameter records for the two birhythmic oscillators."""

from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from birhythm.exceptions import DomainEscape, NoConvergence, ParameterError
from oscillators.integrate import Section

# Concentrations below this count as an integrator escape from the quadrant
NEGATIVE_TOLERANCE = -1e-9


class State(NamedTuple):
    """A point of the planar phase space."""

    x: float
    y: float


class Params:
    """Mixin shared by the parameter records."""

    def __post_init__(self):
        self.clean()

    def as_dict(self):
        """Field values keyed by name, ready to splat into a kernel."""
        return asdict(self)

    def replace(self, **changes):
        """Return a validated copy with ``changes`` applied."""
        return replace(self, **changes)

    def clean(self):
        raise NotImplementedError


@dataclass(frozen=True)
class VdpParams(Params):
    """Parameters of the birhythmic van der Pol oscillator.

    ``mu`` is the input parameter, ``d`` the feedback strength. ``alpha`` and
    ``beta`` may be zero, which gives back the classical oscillator.
    """

    mu: float
    alpha: float = 0.093
    beta: float = 0.0019
    d: float = -0.03

    def clean(self):
        """Validate the record."""
        errors = {}
        for name in ("mu", "alpha", "beta", "d"):
            if not np.isfinite(getattr(self, name)):
                errors[name] = f"{name} must be finite"
        if not self.mu > 0:
            errors.setdefault("mu", "mu must be positive")
        if self.alpha < 0:
            errors.setdefault("alpha", "alpha must not be negative")
        if self.beta < 0:
            errors.setdefault("beta", "beta must not be negative")
        if errors:
            raise ParameterError(errors)


@dataclass(frozen=True)
class GlyParams(Params):
    """Parameters of the Decroly-Goldbeter glycolysis model.

    ``sigma_i`` is the input parameter and ``v`` the substrate input. The
    remaining constants default to the values used throughout the analyses.
    """

    v: float
    sigma_i: float
    K: float = 10.0
    L: float = 3.6e6
    sigma_M: float = 10.0
    n: int = 5
    q: float = 1.0
    k_s: float = 0.06

    def clean(self):
        """Validate the record."""
        errors = {}
        for name in ("v", "sigma_i", "K", "L", "sigma_M", "q", "k_s"):
            if not np.isfinite(getattr(self, name)):
                errors[name] = f"{name} must be finite"
        for name in ("v", "sigma_i"):
            if getattr(self, name) < 0:
                errors.setdefault(name, f"{name} must not be negative")
        for name in ("K", "L", "sigma_M", "q", "k_s"):
            if not getattr(self, name) > 0:
                errors.setdefault(name, f"{name} must be positive")
        if int(self.n) != self.n or self.n < 3:
            errors["n"] = "n must be an integer of at least 3"
        if errors:
            raise ParameterError(errors)


def vdp_kernel(x, y, mu, alpha, beta, d):
    """Scalar van der Pol field with the feedback term."""
    x2 = x * x
    damping = mu * (1.0 - x2 + alpha * x2 * x2 - beta * x2 * x2 * x2)
    return y, damping * y - x - d * (y - x)


def reaction_rate(x, y, L):
    """Allosteric rate of reaction, in [0, 1) on the physical quadrant."""
    product = (1.0 + x) ** 2 * (1.0 + y) ** 2
    return x * (1.0 + x) * (1.0 + y) ** 2 / (L + product)


def gly_kernel(x, y, v, sigma_i, K, L, sigma_M, n, q, k_s):
    """Scalar glycolysis field; raises DomainEscape below the quadrant."""
    if x < NEGATIVE_TOLERANCE or y < NEGATIVE_TOLERANCE:
        raise DomainEscape(f"negative concentration at ({x!r}, {y!r})")
    yn = y**n
    feedback = sigma_i * yn / (K**n + yn)
    rate = sigma_M * reaction_rate(x, y, L)
    return v + feedback - rate, q * rate - k_s * y - q * feedback


def vdp_rhs(s, p):
    """Time derivative of the van der Pol oscillator at ``s``."""
    return State(*vdp_kernel(s[0], s[1], **p.as_dict()))


def gly_rhs(s, p):
    """Time derivative of the glycolysis model at ``s``."""
    return State(*gly_kernel(s[0], s[1], **p.as_dict()))


class Model:
    """A planar vector field with the constants the analyses need.

    ``scale`` is the model size D used for the seed fan, tolerances and
    bounds. ``time_scale`` is a typical period, used to size integration
    chunks.
    """

    name = ""
    label = ""
    params_class = None
    input_param = ""
    scale = 1.0
    time_scale = 1.0
    tc_step = 1.0
    tc_offsets = ()
    fan_radii = (0.3, 1.2)
    # Single-cycle points are split into II and IV by cycle amplitude
    region_by_amplitude = False

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"

    def __reduce__(self):
        return get_model, (self.name,)

    def kernel(self, x, y, **params):
        raise NotImplementedError

    def params(self, **values):
        """Build the parameter record of this model."""
        return self.params_class(**values)

    def rhs(self, s, params):
        """Time derivative at ``s`` as a State."""
        return State(*self.kernel(s[0], s[1], **params.as_dict()))

    def field(self, params, drive=None):
        """Return ``fun(t, u)`` for the integrator.

        ``drive`` maps time to parameter overrides, evaluated at every stage.
        """
        values = params.as_dict()
        kernel = self.kernel
        if drive is None:

            def fun(t, u):
                return np.array(kernel(u[0], u[1], **values))

        else:

            def fun(t, u):
                return np.array(kernel(u[0], u[1], **{**values, **drive(t)}))

        return fun

    def equilibrium_seed(self, params):
        """Starting guess for the equilibrium solve."""
        raise NotImplementedError

    def section(self, equilibrium):
        """Poincare section transversal to every cycle around ``equilibrium``."""
        raise NotImplementedError

    def clip(self, state):
        """Move a seed back into the domain of the field."""
        return State(*state)

    @property
    def bound(self):
        """Radius beyond which a run counts as diverging."""
        return 25.0 * self.scale


class VanDerPol(Model):
    """Birhythmic van der Pol oscillator with its unique equilibrium at the origin."""

    name = "vdp"
    label = "birhythmic van der Pol oscillator"
    params_class = VdpParams
    input_param = "mu"
    scale = 4.0
    time_scale = 7.0
    tc_step = 0.11
    tc_offsets = (-1, 0, 1, 2, 3, 4)
    # The outer circle lies outside the large cycle
    fan_radii = (1.2, 8.0)
    region_by_amplitude = True

    def kernel(self, x, y, **params):
        return vdp_kernel(x, y, **params)

    def equilibrium_seed(self, params):
        return State(0.0, 0.0)

    def section(self, equilibrium):
        # Maximum of x: y crosses zero downwards on the right half plane
        return Section(
            fun=lambda u: u[1] - equilibrium[1],
            direction=-1,
            where=lambda u: u[0] > equilibrium[0],
        )


class Glycolysis(Model):
    """Glycolysis model confined to the positive quadrant."""

    name = "gly"
    label = "Decroly-Goldbeter glycolysis model"
    params_class = GlyParams
    input_param = "sigma_i"
    scale = 40.0
    time_scale = 300.0
    tc_step = 15.0
    tc_offsets = (-3, -2, -1, 0, 1, 2, 3)
    fan_radii = (12.0, 48.0)

    def kernel(self, x, y, **params):
        return gly_kernel(x, y, **params)

    def equilibrium_seed(self, params):
        # q*x' + y' = q*v - k_s*y fixes y at equilibrium
        y_e = params.q * params.v / params.k_s
        yn = y_e**params.n
        supply = params.v + params.sigma_i * yn / (params.K**params.n + yn)
        if supply == 0:
            return State(0.0, y_e)
        if supply >= params.sigma_M:
            raise NoConvergence("substrate supply exceeds the maximal reaction rate")

        def balance(x):
            return supply - params.sigma_M * reaction_rate(x, y_e, params.L)

        upper = 1.0
        while balance(upper) > 0:
            upper *= 2.0
        return State(brentq(balance, 0.0, upper, xtol=1e-14), y_e)

    def section(self, equilibrium):
        return Section(fun=lambda u: u[0] - equilibrium[0], direction=1)

    def clip(self, state):
        return State(*(max(value, 1e-3) for value in state))


MODELS = {model.name: model for model in (VanDerPol(), Glycolysis())}


def get_model(model):
    """Return the registered model for a name, or the model itself."""
    if isinstance(model, Model):
        return model
    try:
        return MODELS[model]
    except KeyError:
        raise ParameterError({"model": f"unknown model {model!r}"}) from None


def jacobian(model, s, params):
    """Central finite-difference Jacobian of the vector field at ``s``."""
    model = get_model(model)
    s = np.asarray(s, dtype=float)
    matrix = np.empty((2, 2))
    for i in range(2):
        h = 1e-6 * max(1.0, abs(s[i]))
        step = np.zeros(2)
        step[i] = h
        forward = np.array(model.rhs(s + step, params))
        backward = np.array(model.rhs(s - step, params))
        matrix[:, i] = (forward - backward) / (2.0 * h)
    return matrix
