"""Text formats for frequencies, pair lists, polynomials, matrices and tables.

Floats are written with 17 significant digits so that every file
round-trips bit for bit. All writers go through ``atomic_write``.
"""
from __future__ import annotations

import csv
import io
import os
import re
import sys
import tempfile
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .normalform import SparsePolynomial
from .resonance import FrequencySpec, ResonancePair


def fmt(x):
    return format(float(x), ".17g")


def atomic_write(path, text):
    """Write ``text`` to a sibling temp file, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_toml(path):
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _int_list(values):
    return "[" + ", ".join(str(int(v)) for v in values) + "]"


def _float_list(values):
    return "[" + ", ".join(fmt(v) for v in values) + "]"


# -- frequencies -------------------------------------------------------------

def freq_from_mapping(data):
    try:
        return FrequencySpec(data["m"], tuple(data["omegas"]), data.get("multiplicities"))
    except KeyError as exc:
        raise ValueError(f"frequency data lacks key {exc.args[0]!r}") from None


def read_frequency(path):
    data = load_toml(path)
    return freq_from_mapping(data.get("frequency", data))


def format_frequency(freq):
    return (f"m = {fmt(freq.m)}\n"
            f"omegas = {_float_list(freq.omegas)}\n"
            f"multiplicities = {_int_list(freq.multiplicities)}\n")


def write_frequency(path, freq):
    return atomic_write(path, format_frequency(freq))


# -- resonance pairs ---------------------------------------------------------


def _ints(text):
    return tuple(int(v) for v in re.split(r"\s*,\s*", text.strip().strip("[]()").strip()) if v != "")


def parse_pair(text):
    """Parse ``"3,0;0,1"`` (parentheses optional) into a ``ResonancePair``."""
    parts = text.split(";")
    if len(parts) != 2:
        raise ValueError(f"pair {text!r} must look like 'lam;rho', e.g. '4,0;0,1'")
    try:
        return ResonancePair(_ints(parts[0]), _ints(parts[1]))
    except ValueError as exc:
        raise ValueError(f"bad pair {text!r}: {exc}") from None


def format_pair_line(pair, freq, minimal):
    return (f"lambda={_int_list(pair.lam)};rho={_int_list(pair.rho)};dot={fmt(pair.dot(freq))};"
            f"minimal={int(bool(minimal))};bad_modes={_int_list(pair.bad_modes())}")


def format_pairs(pairs, freq, minimal):
    minimal = set(minimal)
    return "".join(format_pair_line(p, freq, p in minimal) + "\n" for p in sorted(pairs))


def read_pairs(path):
    """Return ``(all_pairs, minimal_pairs)`` from a pair-list file."""
    pairs, star = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = dict(item.split("=", 1) for item in line.split(";") if "=" in item)
            try:
                p = ResonancePair(_ints(fields["lambda"]), _ints(fields["rho"]))
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed pair line ({exc})") from None
            pairs.append(p)
            if fields.get("minimal", "0").strip() == "1":
                star.append(p)
    return pairs, star


# -- polynomials -------------------------------------------------------------

def format_polynomial(P, header=None):
    lines = []
    if header:
        lines += [f"# {h}" for h in header]
    lines.append(f"# omegas = {_float_list(P.omegas)}")
    for (mu, nu), c in P:
        lines.append(f"mu={_int_list(mu)} nu={_int_list(nu)} re={fmt(c.real)} im={fmt(c.imag)}")
    return "\n".join(lines) + "\n"


def write_polynomial(path, P, header=None):
    return atomic_write(path, format_polynomial(P, header))


_MONO = re.compile(r"mu=\[([^\]]*)\]\s+nu=\[([^\]]*)\]\s+re=(\S+)\s+im=(\S+)")


def read_polynomial(path, omegas=None):
    """Read a polynomial file; slot frequencies come from the header or ``omegas``."""
    terms = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.match(r"#\s*omegas\s*=\s*\[([^\]]*)\]", line)
                if m and omegas is None:
                    omegas = [float(v) for v in m.group(1).split(",") if v.strip()]
                continue
            m = _MONO.fullmatch(line)
            if not m:
                raise ValueError(f"{path}:{lineno}: expected 'mu=[..] nu=[..] re=<f> im=<f>'")
            key = (_ints(m.group(1)), _ints(m.group(2)))
            terms[key] = terms.get(key, 0.0) + complex(float(m.group(3)), float(m.group(4)))
    if omegas is None:
        raise ValueError(f"{path}: slot frequencies missing (no '# omegas = [..]' header)")
    return SparsePolynomial(omegas, terms)


# -- operators, couplings, matrices -----------------------------------------

def read_operator(path):
    """Load a ``ContinuumOperator`` from ``.npz`` arrays of the same names."""
    from .fgr import ContinuumOperator

    with np.load(path) as data:
        if "eigenvalues" not in data or "eigenvectors" not in data:
            raise ValueError(f"{path}: needs arrays 'eigenvalues' and 'eigenvectors'")
        kw = {k: data[k] for k in ("weights", "b_squared", "bound_vectors") if k in data}
        m = float(data["m"]) if "m" in data else None
        return ContinuumOperator(data["eigenvalues"], data["eigenvectors"], m=m, **kw)


def write_operator(path, op):
    arrays = {"eigenvalues": op.eigenvalues, "eigenvectors": op.eigenvectors,
              "weights": op.weights, "m": np.float64(op.m)}
    if op.b_squared is not None:
        arrays["b_squared"] = op.b_squared
    if op.bound_vectors is not None:
        arrays["bound_vectors"] = op.bound_vectors
    np.savez(path, **arrays)


def coupling_name(key):
    mu, nu = key
    return f"mu={_int_list(mu)};nu={_int_list(nu)}"


def read_couplings(path):
    """Couplings stored as ``.npz`` arrays named ``mu=[..];nu=[..]``."""
    out = {}
    with np.load(path) as data:
        for name in data.files:
            m = re.fullmatch(r"mu=\[([^\]]*)\];nu=\[([^\]]*)\]", name)
            if not m:
                raise ValueError(f"{path}: array name {name!r} is not 'mu=[..];nu=[..]'")
            out[(_ints(m.group(1)), _ints(m.group(2)))] = np.asarray(data[name])
    return out


def write_couplings(path, couplings):
    np.savez(path, **{coupling_name(k): np.asarray(v) for k, v in couplings.items()})


def format_matrices(mats, pair=None, verdict=None):
    lines = []
    if pair is not None:
        lines.append(f"pair = lambda={_int_list(pair.lam)};rho={_int_list(pair.rho)}")
    lines += [f"shell_energy = {fmt(mats.shell_energy)}", f"width = {fmt(mats.width)}",
              f"kernel = {mats.kernel}", f"dim = {len(mats.basis)}"]
    if verdict is not None:
        lines += [f"fgr = {verdict.status}", f"min_eigenvalue = {fmt(verdict.min_eigenvalue)}",
                  f"tol_def = {fmt(verdict.tol_def)}"]
    lines.append("basis:")
    lines += [f"  {i}: {coupling_name(k)}" for i, k in enumerate(mats.basis)]
    for name, M in (("T_re", mats.T_re), ("T_im", mats.T_im)):
        for part, f in (("re", np.real), ("im", np.imag)):
            lines.append(f"{name}.{part}:")
            lines += ["  " + " ".join(fmt(v) for v in row) for row in f(M)]
    return "\n".join(lines) + "\n"


def format_csv(columns):
    """CSV text from an ordered mapping of equal-length columns."""
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for row in zip(*data):
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns):
    return atomic_write(path, format_csv(columns))


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]]) if len(rows) > 1 else np.zeros((0, len(names)))
    return {k: data[:, i] for i, k in enumerate(names)}
