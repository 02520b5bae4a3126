"""Schema-versioned JSON and CSV output with fixed float formatting.

Floats are written with 17 significant digits so identical computations give
byte-identical files; non-finite floats become ``null``.
"""
from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .domain import Domain, domain_from_dict, domain_to_dict
from .errors import ValidationError
from .graph_core import WeightedGraph, graph_from_dict, graph_to_dict

SCHEMA = "ruinkit/1"


def fmt_float(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return "%.17g" % x


def _encode(obj, out: list, indent: int, level: int):
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = ", " if not indent else ","
    if obj is None or obj is True or obj is False:
        out.append(json.dumps(obj))
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(sep)
            out.append(pad + json.dumps(str(k)) + ": ")
            _encode(v, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = obj.tolist() if isinstance(obj, np.ndarray) else obj
        if not items:
            out.append("[]")
            return
        out.append("[")
        for i, v in enumerate(items):
            if i:
                out.append(", ")
            _encode(v, out, 0, 0)
        out.append("]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with 17-digit floats.  Lists are kept on one line."""
    out: list = []
    _encode(obj, out, indent, 0)
    return "".join(out) + "\n"


def with_schema(doc: dict) -> dict:
    return {"schema": SCHEMA, **doc}


def check_schema(doc) -> dict:
    if not isinstance(doc, dict):
        raise ValidationError("expected a JSON object")
    schema = doc.get("schema", SCHEMA)
    if schema != SCHEMA:
        raise ValidationError(f"unsupported schema {schema!r}; expected {SCHEMA!r}")
    return doc


def loads(text: str) -> dict:
    try:
        return check_schema(json.loads(text))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"input is not valid JSON: {exc}") from None


def model_document(graph: WeightedGraph, domain: Domain, spec=None) -> dict:
    doc = {}
    if spec is not None:
        doc["model"] = spec.to_dict()
    doc["graph"] = graph_to_dict(graph)
    doc["domain"] = domain_to_dict(domain)
    return with_schema(doc)


def read_model_document(doc: dict):
    """(graph, domain, spec dict or None) from a model document."""
    check_schema(doc)
    if "graph" not in doc or "domain" not in doc:
        raise ValidationError("model JSON needs 'graph' and 'domain' fields")
    graph = graph_from_dict(doc["graph"])
    domain = domain_from_dict(graph, doc["domain"])
    return graph, domain, doc.get("model")


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()
