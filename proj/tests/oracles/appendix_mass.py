"""Independent high-precision evaluation of the sphere integral of the mass
for the m = 2 bump-profile metric, used to freeze reference values for the
C++ tests.

Everything is recomputed from scratch with mpmath: the bump, the momentum
profile, the gauge root, the model Christoffel symbols (numerical
differentiation) and the sphere integral (reduced to one polar angle, since
for diagonal forms the integrand does not depend on the phases).

Run: python3 tests/oracles/appendix_mass.py
"""
import mpmath as mp

mp.mp.dps = 30
m = 2
n = 2 * m
Z0, Z1 = mp.mpf(1), mp.mpf(2)


def chi_raw(z):
    if z <= Z0 or z >= Z1:
        return mp.mpf(0)
    return mp.e ** (-1 / ((z - Z0) * (Z1 - z)))


NORM = mp.quad(chi_raw, [Z0, Z1])
M1 = mp.quad(lambda z: z * chi_raw(z), [Z0, Z1]) / NORM


def F(x):
    if x <= Z0:
        return mp.mpf(0)
    if x >= Z1:
        return x - M1
    return mp.quad(lambda z: (x - z) * chi_raw(z), [Z0, x]) / NORM


def alpha(x):
    return x ** (1 - m) * F(x)


def theta0(x):
    return 2 * x + 2 * x * x


def theta(x):
    return theta0(x) - alpha(x)


def gap(x):
    f = lambda t: alpha(t) / (theta(t) * theta0(t))
    if x >= Z1:
        return mp.quad(f, [x, mp.inf])
    return mp.quad(f, [x, Z1]) + mp.quad(f, [Z1, mp.inf])


def delta(x0):
    g = lambda d: (mp.log1p(d / x0) - mp.log1p(d / (1 + x0))) / 2 - gap(x0 + d)
    guess = 2 * x0 * (1 + x0) * gap(x0)
    return mp.findroot(g, guess, tol=mp.mpf(10) ** -26)


def pert_coeffs(q):
    x0 = q / (1 - q)
    d = delta(x0)
    dth = d * (2 + 4 * x0 + 2 * d) - alpha(x0 + d)
    return d / q, (dth / 2 - d) / q ** 2


def Jmat():
    J = mp.zeros(n, n)
    for k in range(m):
        J[2 * k + 1, 2 * k] = 1
        J[2 * k, 2 * k + 1] = -1
    return J


J = Jmat()


def radial(p, a, b):
    Jp = J * p
    return a * mp.eye(n) + b * (p * p.T + Jp * Jp.T)


def G0(p):
    q = (p.T * p)[0]
    return radial(p, 1 / (1 - q), 1 / (1 - q) ** 2)


def unit(k):
    e = mp.zeros(n, 1)
    e[k] = 1
    return e


def dG0(p):
    return [mp.matrix([[mp.diff(lambda t: G0(p + t * unit(k))[i, j], 0) for j in range(n)] for i in range(n)])
            for k in range(n)]


def mass_at(R, eps):
    s = mp.tanh(R)
    q = s * s
    da, db = pert_coeffs(q)
    dda = mp.diff(lambda t: pert_coeffs(t)[0], q)
    ddb = mp.diff(lambda t: pert_coeffs(t)[1], q)

    def integrand(th):
        p = mp.matrix([s * mp.cos(th), 0, s * mp.sin(th), 0])
        G = G0(p)
        Gi = G ** -1
        dG = dG0(p)
        Gam = [[[sum(Gi[k, l] * (dG[i][l, j] + dG[j][l, i] - dG[l][i, j]) for l in range(n)) / 2
                 for j in range(n)] for i in range(n)] for k in range(n)]
        H = radial(p, da, db)
        dH = []
        for k in range(n):
            e = unit(k)
            Jp, Je = J * p, J * e
            dP = e * p.T + p * e.T + Je * Jp.T + Jp * Je.T
            dH.append(2 * p[k] * (dda * mp.eye(n) + ddb * (p * p.T + Jp * Jp.T)) + db * dP)
        tr = sum((Gi * H)[i, i] for i in range(n))
        dtr = [sum((Gi * dH[k])[i, i] for i in range(n)) - sum((Gi * dG[k] * Gi * H)[i, i] for i in range(n))
               for k in range(n)]
        div = [mp.mpf(0)] * n
        for l in range(n):
            acc = 0
            for i in range(n):
                for j in range(n):
                    nab = dH[i][j, l] - sum(Gam[k][i][j] * H[k, l] + Gam[k][i][l] * H[j, k] for k in range(n))
                    acc += Gi[i, j] * nab
            div[l] = -acc
        w2 = [p[2 * k] ** 2 + p[2 * k + 1] ** 2 for k in range(m)]
        uf = lambda x: (sum(eps[k] * (x[2 * k] ** 2 + x[2 * k + 1] ** 2) for k in range(m)) + eps[m]) / (
            1 - (x.T * x)[0])
        u = uf(p)
        du = [mp.diff(lambda t: uf(p + t * unit(k)), 0) for k in range(n)]
        lam = [(dtr[k] + div[k]) * u - tr * du[k] / 2 for k in range(n)]
        nu = [(1 - q) * p[k] / s for k in range(n)]
        a0, b0 = 1 / (1 - q), 1 / (1 - q) ** 2
        dA = mp.sqrt(a0 + b0 * q) * a0 ** (m - 1) * s ** (2 * m - 1) * mp.cos(th) * mp.sin(th) * (2 * mp.pi) ** 2
        return sum(lam[k] * nu[k] for k in range(n)) * dA

    return -mp.quad(integrand, [0, mp.pi / 2]) / 4


if __name__ == "__main__":
    for R in (2, 3):
        for eps in ((1, 0, 0), (0, 0, 1), (1, 1, 1)):
            print(R, eps, mp.nstr(mass_at(mp.mpf(R), eps), 15))
