"""50-digit reference values for the Hartmann closed forms.

Regenerate with `python3 hartmann_reference.py` and paste the output into
`tests/hartmann_oracle.rs`.
"""
import mpmath as mp

mp.mp.dps = 50
MU0 = mp.mpf(1)
L = mp.mpf(1)


def u(mu, rho, dp, eta, b0):
    z = b0 * L / mp.sqrt(eta * mu)
    return -dp * eta / b0**2 * (1 - z * mp.coth(z))


def b(mu, rho, dp, eta, b0):
    z = b0 * L / mp.sqrt(eta * mu)
    return dp * L * MU0 / (2 * b0) * (1 - 2 / z * mp.tanh(z / 2))


def velocity_bracket(z):
    return (1 - z * mp.coth(z)) / z**2


def field_bracket(z):
    return (1 - 2 / z * mp.tanh(z / 2)) / z


bounds = [(0.05, 0.2), (1.0, 5.0), (0.5, 3.0), (0.5, 3.0), (0.1, 1.0)]
points = [
    [(a + c) / 2 for a, c in bounds],
    [a for a, _ in bounds],
    [c for _, c in bounds],
    [0.2, 1.0, 3.0, 3.0, 0.1],
    [0.05, 5.0, 0.5, 0.5, 1.0],
    [0.1, 2.0, 1.7, 0.8, 0.3],
]

print("const POINTS: [[f64; 5]; %d] = [" % len(points))
for p in points:
    print("    [%s]," % ", ".join(repr(float(v)) for v in p))
print("];")
for name, f in [("U_REF", u), ("B_REF", b)]:
    print("const %s: [f64; %d] = [" % (name, len(points)))
    for p in points:
        print("    %s," % mp.nstr(f(*[mp.mpf(v) for v in p]), 20))
    print("];")
zs = ["1e-8", "1e-5", "1e-3", "0.01", "0.05", "0.0999", "0.1001", "0.5", "1", "3", "10"]
print("const Z: [f64; %d] = [%s];" % (len(zs), ", ".join(zs)))
for name, f in [("VELOCITY_REF", velocity_bracket), ("FIELD_REF", field_bracket)]:
    print("const %s: [f64; %d] = [" % (name, len(zs)))
    for z in zs:
        print("    %s," % mp.nstr(f(mp.mpf(z)), 20))
    print("];")
