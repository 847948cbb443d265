"""Unit-quaternion helpers on plain tuples, ordered (w, x, y, z).

The replay loop calls these thousands of times per trial, so they work on
tuples of floats instead of numpy arrays.
"""

from __future__ import annotations

import math

Quat = tuple[float, float, float, float]
Vec3 = tuple[float, float, float]

IDENTITY: Quat = (1.0, 0.0, 0.0, 0.0)
NORM_TOL = 1e-12


def canonical(q: Quat) -> Quat:
    """Return the representative of ``q`` with w >= 0.

    For w == 0 the first nonzero of (x, y, z) is made positive.
    """
    w, x, y, z = q
    if w > 0.0:
        return q
    if w < 0.0:
        return (-w, -x, -y, -z)
    for c in (x, y, z):
        if c > 0.0:
            return (0.0, x, y, z)
        if c < 0.0:
            return (0.0, -x, -y, -z)
    return q


def normalize(q: Quat) -> Quat:
    """Scale to unit norm and canonicalize.

    Already-unit inputs (within 1e-12) are only canonicalized so that
    repeated normalization is bit-stable.
    """
    w, x, y, z = (float(c) for c in q)
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if not math.isfinite(n) or n == 0.0:
        raise ValueError(f"cannot normalize quaternion {q!r}")
    if abs(n - 1.0) > NORM_TOL:
        w, x, y, z = w / n, x / n, y / n, z / n
    return canonical((w, x, y, z))


def mul(a: Quat, b: Quat) -> Quat:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def conj(q: Quat) -> Quat:
    return (q[0], -q[1], -q[2], -q[3])


def dot(a: Quat, b: Quat) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]


def log_map(q: Quat) -> Vec3:
    """Rotation vector (axis * angle) of ``q`` along the shortest arc.

    At exactly pi the axis sign is fixed so its first nonzero component is
    positive.
    """
    w, x, y, z = canonical(q)
    s = math.sqrt(x * x + y * y + z * z)
    if s < 1e-300:
        return (0.0, 0.0, 0.0)
    angle = 2.0 * math.atan2(s, w)
    k = angle / s
    return (x * k, y * k, z * k)


def exp_map(v: Vec3) -> Quat:
    """Unit quaternion rotating by ``|v|`` radians about ``v``."""
    vx, vy, vz = v
    theta = math.sqrt(vx * vx + vy * vy + vz * vz)
    if theta < 1e-12:
        # second-order series keeps tiny steps accurate
        return normalize((1.0 - theta * theta / 8.0, vx / 2.0, vy / 2.0, vz / 2.0))
    half = 0.5 * theta
    k = math.sin(half) / theta
    return (math.cos(half), vx * k, vy * k, vz * k)


def error_vector(target: Quat, current: Quat) -> Vec3:
    """World-frame rotation vector taking ``current`` onto ``target``."""
    return log_map(mul(target, conj(current)))


def angle_between(a: Quat, b: Quat) -> float:
    """Angular distance 2*acos(|<a, b>|) in [0, pi].

    Evaluated as 4*atan2(|a - s*b|, |a + s*b|) with s the sign of <a, b>,
    which equals the acos form for unit inputs but stays accurate when the
    rotations nearly coincide (acos loses about 1e-8 rad there).
    """
    s = -1.0 if dot(a, b) < 0.0 else 1.0
    dw, dx, dy, dz = a[0] - s * b[0], a[1] - s * b[1], a[2] - s * b[2], a[3] - s * b[3]
    pw, px, py, pz = a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]
    return 4.0 * math.atan2(math.sqrt(dw * dw + dx * dx + dy * dy + dz * dz),
                            math.sqrt(pw * pw + px * px + py * py + pz * pz))


def slerp(a: Quat, b: Quat, u: float) -> Quat:
    """Spherical interpolation from ``a`` (u=0) to ``b`` (u=1), shortest arc."""
    if u <= 0.0:
        return a
    if u >= 1.0:
        return b
    d = dot(a, b)
    if d < 0.0:
        b = (-b[0], -b[1], -b[2], -b[3])
        d = -d
    if d > 0.9995:
        out = tuple(a[i] + (b[i] - a[i]) * u for i in range(4))
        return normalize(out)  # type: ignore[arg-type]
    theta = math.acos(d)
    sin_t = math.sin(theta)
    wa = math.sin((1.0 - u) * theta) / sin_t
    wb = math.sin(u * theta) / sin_t
    return normalize(tuple(wa * a[i] + wb * b[i] for i in range(4)))  # type: ignore[arg-type]


def from_axis_angle(axis: Vec3, angle: float) -> Quat:
    ax, ay, az = axis
    n = math.sqrt(ax * ax + ay * ay + az * az)
    if n == 0.0:
        raise ValueError("zero rotation axis")
    return exp_map((ax / n * angle, ay / n * angle, az / n * angle))
