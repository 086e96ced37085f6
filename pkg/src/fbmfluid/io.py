"""File formats: flat little-endian float64 arrays with a JSON sidecar, and
whitespace-separated column tables."""
import json
import math
import os

import numpy as np

from .errors import ConfigurationError

SCHEMA_NAME = "fbmfluid-output"
SCHEMA_VERSION = 1


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        # JSON has no inf/nan; keep them readable as strings
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps_json(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def ensure_dir(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigurationError(f"cannot create output directory {path!r}: {exc.strerror}") from exc
    if not os.access(path, os.W_OK):
        raise ConfigurationError(f"output directory {path!r} is not writable")
    return path


def write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise ConfigurationError(f"cannot write {path!r}: {exc.strerror}") from exc


def write_json(path, obj):
    write_text(path, dumps_json(obj))


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_array(prefix, array, header=None):
    """Write ``prefix.bin`` (C order, <f8) and ``prefix.json`` describing it."""
    a = np.ascontiguousarray(array, dtype="<f8")
    meta = dict(header or {})
    meta.update(shape=list(a.shape), dtype="<f8", order="C")
    try:
        with open(prefix + ".bin", "wb") as fh:
            fh.write(a.tobytes())
    except OSError as exc:
        raise ConfigurationError(f"cannot write {prefix + '.bin'!r}: {exc.strerror}") from exc
    write_json(prefix + ".json", meta)


def read_array(prefix):
    meta = read_json(prefix + ".json")
    a = np.fromfile(prefix + ".bin", dtype=meta.get("dtype", "<f8"))
    return a.reshape(meta["shape"]), meta


def write_columns(path, names, columns):
    cols = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.empty((0, 0))
    lines = ["# " + " ".join(names)]
    lines += [" ".join("%.17g" % x for x in row) for row in cols]
    write_text(path, "\n".join(lines) + "\n")


def read_columns(path):
    with open(path, encoding="utf-8") as fh:
        names = fh.readline().lstrip("#").split()
    data = np.loadtxt(path, ndmin=2)
    return names, data


def write_schema(directory, files):
    write_json(os.path.join(directory, "schema.json"),
               {"schema": SCHEMA_NAME, "version": SCHEMA_VERSION, "files": files})


# --- exporters for library objects ------------------------------------------------------


def export_fbm_path(path, prefix):
    g = path.grid
    write_array(prefix, path.values, {
        "kind": "fbm_path", "t0": g.t0, "dt": g.dt, "n_steps": g.n_steps,
        "H": float(path.hurst), "seed": path.seed, "replica": path.replica,
    })
    write_columns(prefix + ".txt", ["time", "value"], [g.times, path.values])


def export_convolution(sample, prefix):
    """One row per mode, in spectrum order; the header lists the modes."""
    g = sample.grid
    write_array(prefix, sample.z_coeffs, {
        "kind": "stochastic_convolution", "t0": g.t0, "dt": g.dt, "n_steps": g.n_steps,
        "H": float(sample.hurst), "seed": sample.seed, "replica": sample.replica,
        "modes": [list(map(int, m)) for m in sample.spectrum.modes],
        "layout": "row k holds the coefficient of mode k at every time node",
    })


BASIS_NOTE = ("psi(x,y) = sum psi_mn sin(m x) sin(n y) on [0,pi]^2; "
              "u = (d psi/dy, -d psi/dx); modal a_mn = psi_mn (pi/2) sqrt(m^2+n^2)")


def export_field(field, spectrum, ws, prefix):
    write_array(prefix, field.modal(spectrum), {
        "kind": "field", "N": int(spectrum.N), "domain": "[0,pi]^2", "basis": BASIS_NOTE,
        "modes": [list(map(int, m)) for m in spectrum.modes],
    })
    u = ws.velocity(ws.psi_from_modal(field.modal(spectrum)))
    x = ws.x
    X, Y = np.meshgrid(x, x, indexing="ij")
    write_columns(prefix + "_velocity.txt", ["x", "y", "u1", "u2"],
                  [X.ravel(), Y.ravel(), u[0].ravel(), u[1].ravel()])


def export_trajectory(traj, prefix, coefficients=True, diagnostics=None):
    t = traj.times
    write_columns(prefix + "_norms.txt", ["t", "|u|", "|u|_H1", "|u|_V"],
                  [t, traj.norms[:, 0], traj.norms[:, 1], traj.norms[:, 2]])
    if coefficients:
        g = traj.grid
        write_array(prefix + "_coeffs", traj.coeffs, {
            "kind": "trajectory", "t0": g.t0, "dt": g.dt, "n_steps": g.n_steps,
            "basis": BASIS_NOTE, "layout": "row i holds the modal vector at time node i",
            "modes": [list(map(int, m)) for m in traj.spectrum.modes],
        })
    if diagnostics is not None:
        write_json(prefix + "_diagnostics.json", diagnostics)
