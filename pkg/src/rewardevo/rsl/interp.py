"""Bounded evaluator: ASTs compile once into closures, then run per context.

Safety properties enforced here:
  - every node visit charges the step budget; loops cannot run away
  - any non-finite intermediate aborts with a numeric error
  - context values are never mutated (no vector/matrix assignment exists)
  - all failures are RslRuntimeError subclasses
"""

from __future__ import annotations

import math

import numpy as np

from .errors import (
    RslBudgetError,
    RslMissingKeyError,
    RslNumericError,
    RslRuntimeError,
    RslTypeError,
    RslValueError,
)

_SCALARS = (bool, int, float)
_INT_BITS_CAP = 256


class _State:
    __slots__ = ("steps", "budget", "names", "ctx", "max_len")

    def __init__(self, budget: int, ctx: dict, max_len: int):
        self.steps = 0
        self.budget = budget
        self.names: dict = {}
        self.ctx = ctx
        self.max_len = max_len


def _charge(state: _State):
    state.steps += 1
    if state.steps > state.budget:
        raise RslBudgetError(
            f"step budget exceeded ({state.budget} interpreter steps)"
        )


def _kind(v) -> str:
    if isinstance(v, np.ndarray):
        return "matrix" if v.ndim == 2 else "vector"
    if isinstance(v, bool):
        return "boolean"
    if isinstance(v, (int, float)):
        return "scalar"
    if isinstance(v, dict):
        return "record"
    if isinstance(v, str):
        return "string"
    return type(v).__name__


def _guard_scalar(v: float):
    if not math.isfinite(v):
        raise RslNumericError("non-finite intermediate value")
    return v


def _guard(v):
    if isinstance(v, float):
        if not math.isfinite(v):
            raise RslNumericError("non-finite intermediate value")
        return v
    if isinstance(v, bool):
        return v
    if isinstance(v, int):
        if v.bit_length() > _INT_BITS_CAP:
            raise RslNumericError("integer magnitude out of range")
        return v
    if isinstance(v, np.ndarray):
        if not np.isfinite(v).all():
            raise RslNumericError("non-finite intermediate value")
        return v
    raise RslTypeError(f"cannot operate on {_kind(v)} values")


def _num_only(v, what: str):
    if isinstance(v, _SCALARS) or isinstance(v, np.ndarray):
        return v
    raise RslTypeError(f"{what} expects numeric operands, got {_kind(v)}")


def _binop(op: str, a, b):
    _num_only(a, f"operator {op!r}")
    _num_only(b, f"operator {op!r}")
    both_scalar = isinstance(a, _SCALARS) and isinstance(b, _SCALARS)
    try:
        if op == "+":
            r = a + b
        elif op == "-":
            r = a - b
        elif op == "*":
            r = a * b
        elif op == "/":
            if both_scalar:
                if b == 0:
                    raise RslNumericError("division by zero")
                r = a / b
            else:
                r = a / b
        elif op == "%":
            if both_scalar:
                if b == 0:
                    raise RslNumericError("modulo by zero")
                r = a % b
            else:
                r = a % b
        elif op == "**":
            if both_scalar:
                try:
                    r = math.pow(float(a), float(b))
                except (ValueError, OverflowError) as exc:
                    raise RslNumericError(f"power domain error: {exc}")
                # Keep int semantics for small non-negative integer powers.
                if (
                    isinstance(a, int)
                    and isinstance(b, int)
                    and not isinstance(a, bool)
                    and 0 <= b <= 64
                    and abs(r) < 2**53
                ):
                    r = a**b
            else:
                r = np.power(a, b)
        else:  # pragma: no cover - parser admits no other ops
            raise RslTypeError(f"unknown operator {op!r}")
    except RslRuntimeError:
        raise
    except (TypeError, ValueError) as exc:
        raise RslTypeError(f"operator {op!r}: {exc}")
    except (ZeroDivisionError, OverflowError) as exc:
        raise RslNumericError(f"operator {op!r}: {exc}")
    return _guard(r)


def _compare(op: str, a, b):
    _num_only(a, f"comparison {op!r}")
    _num_only(b, f"comparison {op!r}")
    try:
        if op == "<":
            r = a < b
        elif op == "<=":
            r = a <= b
        elif op == ">":
            r = a > b
        elif op == ">=":
            r = a >= b
        elif op == "==":
            r = a == b
        else:
            r = a != b
    except (TypeError, ValueError) as exc:
        raise RslTypeError(f"comparison {op!r}: {exc}")
    if isinstance(r, np.ndarray):
        return r.astype(float)
    return bool(r)


def _truth(v) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, (int, float)):
        return v != 0
    if isinstance(v, np.ndarray):
        raise RslTypeError("truth value of a vector/matrix is ambiguous")
    raise RslTypeError(f"cannot use {_kind(v)} as a condition")


def _vec_arg(x, fn: str) -> np.ndarray:
    if isinstance(x, np.ndarray):
        if x.size == 0:
            raise RslValueError(f"{fn}() of an empty collection")
        return x
    raise RslTypeError(f"{fn}() expects a vector or matrix, got {_kind(x)}")


def _reduce_arg(x, fn: str):
    """Reductions are lenient on scalars (treated as 1-element data)."""
    if isinstance(x, _SCALARS):
        return None
    return _vec_arg(x, fn)


def _int_arg(x, fn: str) -> int:
    if isinstance(x, bool):
        return int(x)
    if isinstance(x, int):
        return x
    if isinstance(x, float) and x.is_integer():
        return int(x)
    raise RslTypeError(f"{fn} expects an integer, got {_kind(x)}")


def _axis_args(args, fn: str):
    if len(args) != 2:
        raise RslValueError(f"{fn}(matrix, axis) takes exactly 2 arguments")
    m = args[0]
    if not (isinstance(m, np.ndarray) and m.ndim == 2):
        raise RslTypeError(f"{fn}() expects a matrix, got {_kind(m)}")
    if m.size == 0:
        raise RslValueError(f"{fn}() of an empty matrix")
    axis = _int_arg(args[1], fn)
    if axis not in (0, 1):
        raise RslValueError(f"{fn}() axis must be 0 or 1")
    return m, axis


def _unary_math(args, fn: str, scalar_fn, array_fn):
    if len(args) != 1:
        raise RslValueError(f"{fn}() takes exactly 1 argument")
    x = args[0]
    if isinstance(x, _SCALARS):
        try:
            return scalar_fn(float(x))
        except (ValueError, OverflowError) as exc:
            raise RslNumericError(f"{fn}(): {exc}")
    if isinstance(x, np.ndarray):
        return array_fn(x)
    raise RslTypeError(f"{fn}() expects numeric input, got {_kind(x)}")


def _b_minmax(args, fn: str):
    npfn = np.minimum if fn == "min" else np.maximum
    redfn = np.min if fn == "min" else np.max
    if len(args) == 0:
        raise RslValueError(f"{fn}() needs at least 1 argument")
    if len(args) == 1:
        x = args[0]
        if isinstance(x, _SCALARS):
            return float(x)
        return float(redfn(_vec_arg(x, fn)))
    out = args[0]
    _num_only(out, fn)
    for nxt in args[1:]:
        _num_only(nxt, fn)
        try:
            out = npfn(out, nxt)
        except ValueError as exc:
            raise RslValueError(f"{fn}(): {exc}")
    if isinstance(out, np.ndarray):
        return out
    return float(out)


def _b_corr(args):
    if len(args) != 2:
        raise RslValueError("corr(a, b) takes exactly 2 arguments")
    a, b = args
    if not (isinstance(a, np.ndarray) and a.ndim == 1):
        raise RslTypeError("corr() expects vectors")
    if not (isinstance(b, np.ndarray) and b.ndim == 1):
        raise RslTypeError("corr() expects vectors")
    if a.shape != b.shape:
        raise RslValueError("corr() vectors must have equal length")
    if a.size < 2:
        return 0.0
    sa = float(np.std(a))
    sb = float(np.std(b))
    if sa == 0.0 or sb == 0.0:
        return 0.0  # zero-variance convention
    c = float(np.mean((a - np.mean(a)) * (b - np.mean(b))) / (sa * sb))
    if not math.isfinite(c):
        return 0.0
    return c


def _call_builtin(name: str, args: list, state: _State):
    if name == "abs":
        return _unary_math(args, "abs", abs, np.abs)
    if name in ("min", "max"):
        return _b_minmax(args, name)
    if name == "sum":
        if len(args) != 1:
            raise RslValueError("sum() takes exactly 1 argument")
        x = _reduce_arg(args[0], "sum")
        return float(args[0]) if x is None else float(np.sum(x))
    if name == "mean":
        if len(args) != 1:
            raise RslValueError("mean() takes exactly 1 argument")
        x = _reduce_arg(args[0], "mean")
        return float(args[0]) if x is None else float(np.mean(x))
    if name == "std":
        if len(args) != 1:
            raise RslValueError("std() takes exactly 1 argument")
        x = _reduce_arg(args[0], "std")
        return 0.0 if x is None else float(np.std(x))
    if name == "median":
        if len(args) != 1:
            raise RslValueError("median() takes exactly 1 argument")
        x = _reduce_arg(args[0], "median")
        return float(args[0]) if x is None else float(np.median(x))
    if name == "quantile":
        if len(args) != 2:
            raise RslValueError("quantile(v, q) takes exactly 2 arguments")
        v = _vec_arg(args[0], "quantile")
        q = args[1]
        if not isinstance(q, _SCALARS) or not 0.0 <= float(q) <= 1.0:
            raise RslValueError("quantile() q must be a scalar in [0, 1]")
        return float(np.quantile(v, float(q)))
    if name == "ptp":
        if len(args) != 1:
            raise RslValueError("ptp() takes exactly 1 argument")
        x = _reduce_arg(args[0], "ptp")
        return 0.0 if x is None else float(np.max(x) - np.min(x))
    if name == "clip":
        if len(args) != 3:
            raise RslValueError("clip(x, lo, hi) takes exactly 3 arguments")
        x, lo, hi = args
        if not isinstance(lo, _SCALARS) or not isinstance(hi, _SCALARS):
            raise RslTypeError("clip() bounds must be scalars")
        if float(lo) > float(hi):
            raise RslValueError("clip() requires lo <= hi")
        if isinstance(x, _SCALARS):
            return float(min(max(float(x), float(lo)), float(hi)))
        if isinstance(x, np.ndarray):
            return np.clip(x, float(lo), float(hi))
        raise RslTypeError(f"clip() expects numeric input, got {_kind(x)}")
    if name == "tanh":
        return _unary_math(args, "tanh", math.tanh, np.tanh)
    if name == "exp":
        return _unary_math(args, "exp", math.exp, np.exp)
    if name == "log":
        return _unary_math(args, "log", math.log, np.log)
    if name == "log1p":
        return _unary_math(args, "log1p", math.log1p, np.log1p)
    if name == "sqrt":
        return _unary_math(args, "sqrt", math.sqrt, np.sqrt)
    if name == "sign":
        return _unary_math(
            args, "sign", lambda v: float(np.sign(v)), np.sign
        )
    if name == "norm":
        if len(args) == 2:
            m, axis = _axis_args(args, "norm_axis")
            return np.sqrt(np.sum(m * m, axis=axis))
        if len(args) != 1:
            raise RslValueError("norm() takes 1 argument (or norm_axis(m, axis))")
        x = args[0]
        if isinstance(x, _SCALARS):
            return abs(float(x))
        return float(np.sqrt(np.sum(_vec_arg(x, "norm") ** 2)))
    if name in ("mean_axis", "std_axis", "min_axis", "max_axis", "norm_axis"):
        m, axis = _axis_args(args, name)
        if name == "mean_axis":
            return np.mean(m, axis=axis)
        if name == "std_axis":
            return np.std(m, axis=axis)
        if name == "min_axis":
            return np.min(m, axis=axis)
        if name == "max_axis":
            return np.max(m, axis=axis)
        return np.sqrt(np.sum(m * m, axis=axis))
    if name == "argsort":
        if len(args) != 1:
            raise RslValueError("argsort() takes exactly 1 argument")
        v = _vec_arg(args[0], "argsort")
        if v.ndim != 1:
            raise RslTypeError("argsort() expects a vector")
        return np.argsort(v, kind="stable").astype(float)
    if name == "sort":
        if len(args) != 1:
            raise RslValueError("sort() takes exactly 1 argument")
        v = _vec_arg(args[0], "sort")
        if v.ndim != 1:
            raise RslTypeError("sort() expects a vector")
        return np.sort(v)
    if name == "len":
        if len(args) != 1:
            raise RslValueError("len() takes exactly 1 argument")
        x = args[0]
        if isinstance(x, np.ndarray):
            return int(x.shape[0])
        if isinstance(x, dict):
            return len(x)
        raise RslTypeError(f"len() of {_kind(x)}")
    if name == "dot":
        if len(args) != 2:
            raise RslValueError("dot(a, b) takes exactly 2 arguments")
        a, b = args
        if not isinstance(a, np.ndarray) or not isinstance(b, np.ndarray):
            raise RslTypeError("dot() expects vectors or matrices")
        try:
            r = np.dot(a, b)
        except ValueError as exc:
            raise RslValueError(f"dot(): {exc}")
        if r.ndim == 0:
            return float(r)
        return r
    if name == "corr":
        return _b_corr(args)
    if name == "roll":
        if len(args) != 2:
            raise RslValueError("roll(x, k) takes exactly 2 arguments")
        x = _vec_arg(args[0], "roll")
        k = _int_arg(args[1], "roll()")
        return np.roll(x, k)
    raise RslTypeError(f"unknown builtin {name!r}")  # pragma: no cover


def _ctx_read(state: _State, field: str):
    v = state.ctx.get(field)
    if v is None:
        raise RslMissingKeyError(
            f"context field {field!r} is absent; optional fields must be read "
            f"with ctx.get({field!r}, default)"
        )
    return v


# -- compilation ---------------------------------------------------------


def _compile_expr(node):
    tag = node[0]

    if tag == "num" or tag == "bool" or tag == "str":
        v = node[1]

        def ev(state, _v=v):
            _charge(state)
            return _v

        return ev

    if tag == "name":
        name = node[1]

        def ev(state, _n=name):
            _charge(state)
            try:
                return state.names[_n]
            except KeyError:
                raise RslTypeError(f"name {_n!r} is not defined")

        return ev

    if tag == "ctx":
        field = node[1]

        def ev(state, _f=field):
            _charge(state)
            return _ctx_read(state, _f)

        return ev

    if tag == "ctxget":
        field = node[1]
        default = _compile_expr(node[2])

        def ev(state, _f=field, _d=default):
            _charge(state)
            v = state.ctx.get(_f)
            if v is None:
                return _d(state)
            return v

        return ev

    if tag == "un":
        op = node[1]
        sub = _compile_expr(node[2])
        if op == "-":

            def ev(state, _s=sub):
                _charge(state)
                v = _num_only(_s(state), "unary -")
                return _guard(-v)

            return ev

        def ev(state, _s=sub):
            _charge(state)
            return not _truth(_s(state))

        return ev

    if tag == "bin":
        op = node[1]
        left = _compile_expr(node[2])
        right = _compile_expr(node[3])

        def ev(state, _op=op, _l=left, _r=right):
            _charge(state)
            return _binop(_op, _l(state), _r(state))

        return ev

    if tag == "cmp":
        op = node[1]
        left = _compile_expr(node[2])
        right = _compile_expr(node[3])

        def ev(state, _op=op, _l=left, _r=right):
            _charge(state)
            return _compare(_op, _l(state), _r(state))

        return ev

    if tag == "boolop":
        op = node[1]
        left = _compile_expr(node[2])
        right = _compile_expr(node[3])
        if op == "and":

            def ev(state, _l=left, _r=right):
                _charge(state)
                return _truth(_l(state)) and _truth(_r(state))

            return ev

        def ev(state, _l=left, _r=right):
            _charge(state)
            return _truth(_l(state)) or _truth(_r(state))

        return ev

    if tag == "call":
        name = node[1]
        arg_fns = tuple(_compile_expr(a) for a in node[2])

        def ev(state, _n=name, _a=arg_fns):
            _charge(state)
            args = [fn(state) for fn in _a]
            return _guard(_call_builtin(_n, args, state))

        return ev

    if tag == "idx":
        base = _compile_expr(node[1])
        sub = _compile_expr(node[2])

        def ev(state, _b=base, _s=sub):
            _charge(state)
            obj = _b(state)
            key = _s(state)
            if isinstance(obj, dict):
                if not isinstance(key, str):
                    raise RslTypeError("record index must be a string")
                try:
                    return obj[key]
                except KeyError:
                    raise RslValueError(f"record has no key {key!r}")
            if isinstance(obj, np.ndarray):
                idx = _int_arg(key, "index")
                n = obj.shape[0]
                if not -n <= idx < n:
                    raise RslValueError(f"index {idx} out of range for length {n}")
                v = obj[idx]
                if isinstance(v, np.ndarray):
                    return v
                return float(v)
            raise RslTypeError(f"cannot index a {_kind(obj)}")

        return ev

    if tag == "vec":
        elem_fns = tuple(_compile_expr(e) for e in node[1])

        def ev(state, _e=elem_fns):
            _charge(state)
            vals = [fn(state) for fn in _e]
            if len(vals) > state.max_len:
                raise RslValueError("collection literal too long")
            if all(isinstance(v, _SCALARS) for v in vals):
                return _guard(np.array(vals, dtype=float))
            if vals and all(
                isinstance(v, np.ndarray) and v.ndim == 1 for v in vals
            ):
                if len({v.shape[0] for v in vals}) != 1:
                    raise RslValueError("matrix rows must have equal length")
                return _guard(np.array(vals, dtype=float))
            raise RslTypeError(
                "vector literals hold scalars; matrix literals hold equal-length vectors"
            )

        return ev

    if tag == "rec":
        item_fns = tuple((k, _compile_expr(v)) for k, v in node[1])

        def ev(state, _i=item_fns):
            _charge(state)
            out = {}
            for k, fn in _i:
                v = fn(state)
                if not isinstance(v, _SCALARS):
                    raise RslTypeError(
                        f"record values must be scalars, got {_kind(v)} for {k!r}"
                    )
                out[k] = _guard_scalar(float(v))
            return out

        return ev

    raise RslTypeError(f"unknown AST node {tag!r}")  # pragma: no cover


def _compile_block(stmts):
    fns = tuple(_compile_stmt(s) for s in stmts)

    def run(state, _f=fns):
        for fn in _f:
            fn(state)

    return run


def _compile_stmt(node):
    tag = node[0]

    if tag == "assign":
        name = node[1]
        value = _compile_expr(node[2])

        def run(state, _n=name, _v=value):
            _charge(state)
            state.names[_n] = _v(state)

        return run

    if tag == "setitem":
        name = node[1]
        key = _compile_expr(node[2])
        value = _compile_expr(node[3])

        def run(state, _n=name, _k=key, _v=value):
            _charge(state)
            try:
                obj = state.names[_n]
            except KeyError:
                raise RslTypeError(f"name {_n!r} is not defined")
            if not isinstance(obj, dict):
                raise RslTypeError(
                    f"subscript assignment needs a record, {_n!r} is {_kind(obj)}"
                )
            k = _k(state)
            if not isinstance(k, str):
                raise RslTypeError("record key must be a string")
            v = _v(state)
            if not isinstance(v, _SCALARS):
                raise RslTypeError(
                    f"record values must be scalars, got {_kind(v)}"
                )
            if len(obj) >= state.max_len and k not in obj:
                raise RslValueError("record too large")
            obj[k] = _guard_scalar(float(v))

        return run

    if tag == "if":
        arms = tuple(
            (_compile_expr(cond), _compile_block(block)) for cond, block in node[1]
        )
        else_block = _compile_block(node[2]) if node[2] is not None else None

        def run(state, _a=arms, _e=else_block):
            _charge(state)
            for cond, block in _a:
                if _truth(cond(state)):
                    block(state)
                    return
            if _e is not None:
                _e(state)

        return run

    if tag == "for":
        var = node[1]
        count = _compile_expr(node[2])
        body = _compile_block(node[3])

        def run(state, _v=var, _c=count, _b=body):
            _charge(state)
            n = _int_arg(_c(state), "range()")
            if n < 0:
                raise RslValueError("range() count must be >= 0")
            names = state.names
            for i in range(n):
                _charge(state)
                names[_v] = i
                _b(state)

        return run

    raise RslTypeError(f"unknown statement {tag!r}")  # pragma: no cover


def compile_program(ast):
    """Compile ("program", stmts) into fn(state) -> (total, components)."""
    stmts = ast[1]
    body = _compile_block(stmts[:-1])
    ret = stmts[-1]
    total_fn = _compile_expr(ret[1])
    rec_fn = _compile_expr(ret[2])

    def run(state):
        body(state)
        total = total_fn(state)
        rec = rec_fn(state)
        if not isinstance(total, _SCALARS):
            raise RslTypeError(
                f"reward total must be a scalar, got {_kind(total)}"
            )
        if not isinstance(rec, dict):
            raise RslTypeError(
                f"reward components must be a record, got {_kind(rec)}"
            )
        out = {}
        for k, v in rec.items():
            if not isinstance(v, _SCALARS):
                raise RslTypeError(
                    f"component {k!r} must be a scalar, got {_kind(v)}"
                )
            out[k] = _guard_scalar(float(v))
        return _guard_scalar(float(total)), out

    return run


def run_compiled(compiled, context: dict, budget: int, max_len: int):
    """Execute with guards; returns (total, components)."""
    state = _State(budget, context, max_len)
    old = np.seterr(all="ignore")
    try:
        return compiled(state)
    except RslRuntimeError:
        raise
    except RecursionError:
        raise RslRuntimeError("evaluation nesting too deep")
    except MemoryError:
        raise RslValueError("evaluation exceeded memory limits")
    except Exception as exc:  # totality: never leak a raw exception
        raise RslRuntimeError(f"internal evaluation error: {type(exc).__name__}: {exc}")
    finally:
        np.seterr(**old)
