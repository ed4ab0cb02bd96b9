"""SMILES to attributed molecular graphs with a fixed 78-wide atom encoding.

Supported grammar: organic-subset atoms, bracket atoms (isotope, chirality,
hydrogen count, charge, atom class), ring closures ``0-9`` and ``%nn``,
branches, bond symbols ``- = # $ :`` and dot-disconnected components. Stereo
markers (``/ \\ @``) are accepted and discarded. Aromaticity is taken from
lowercase symbols; no Hückel perception is attempted.

Feature layout (version ``FEATURE_LAYOUT``), see docs/FEATURES.md:

    [0, 44)   element one-hot over ELEMENT_SLOTS (last slot = other)
    [44, 55)  degree one-hot 0..10, clamped
    [55, 66)  total hydrogen count one-hot 0..10, clamped
    [66, 77)  formal charge one-hot -5..+5, clamped
    [77]      aromatic flag
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyInput,
    SmilesSyntaxError,
    UnbalancedParenthesis,
    UnclosedRingBond,
    UnknownElement,
)

FEATURE_LAYOUT = "adgsyn-atom-v1"
GRAPH_FORMAT_VERSION = 1
N_FEATURES = 78

ELEMENT_SLOTS = (
    "C", "N", "O", "S", "F", "Si", "P", "Cl", "Br", "Mg", "Na", "Ca", "Fe", "As", "Al",
    "I", "B", "V", "K", "Tl", "Yb", "Sb", "Sn", "Ag", "Pd", "Co", "Se", "Ti", "Zn", "H",
    "Li", "Ge", "Cu", "Au", "Ni", "Cd", "In", "Mn", "Zr", "Cr", "Pt", "Hg", "Pb", "other",
)
MAX_COUNT = 10
CHARGE_RANGE = (-5, 5)
BLOCKS = {
    "element": (0, 44),
    "degree": (44, 55),
    "hydrogens": (55, 66),
    "charge": (66, 77),
    "aromatic": (77, 78),
}

PERIODIC_TABLE = frozenset("""
H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn Ga Ge
As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Ce Pr Nd Pm Sm
Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U
Np Pu Am Cm Bk Cf Es Fm Md No Lr Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og
""".split())

ORGANIC_VALENCES = {
    "B": (3,), "C": (4,), "N": (3, 5), "O": (2,), "P": (3, 5), "S": (2, 4, 6),
    "F": (1,), "Cl": (1,), "Br": (1,), "I": (1,),
}
AROMATIC_ORGANIC = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S"}
AROMATIC_BRACKET = {"b": "B", "c": "C", "n": "N", "o": "O", "p": "P", "s": "S",
                    "se": "Se", "as": "As", "te": "Te"}
# lone-pair donors: their aromatic bonds already satisfy the lowest valence
_LONE_PAIR_DONORS = {"O", "S", "Se", "Te"}

BOND_ORDERS = {"-": 1.0, "=": 2.0, "#": 3.0, "$": 4.0, ":": 1.5}
AROMATIC_ORDER = 1.5


@dataclass
class Atom:
    element: str
    is_aromatic: bool = False
    formal_charge: int = 0
    implicit_hydrogens: int = 0
    degree: int = 0
    bracket: bool = False
    isotope: int | None = None


@dataclass
class MolecularGraph:
    atoms: list
    bonds: list  # (i, j, order) with i < j
    smiles: str = ""
    features: np.ndarray = field(default=None, repr=False)

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_atoms, self.n_atoms), dtype=bool)
        for i, j, _ in self.bonds:
            a[i, j] = a[j, i] = True
        return a

    def edge_index(self) -> np.ndarray:
        """Directed edges (2, 2*n_bonds), both directions of every bond."""
        if not self.bonds:
            return np.zeros((2, 0), dtype=np.int64)
        ij = np.array([(i, j) for i, j, _ in self.bonds], dtype=np.int64).T
        return np.concatenate([ij, ij[::-1]], axis=1)

    def permuted(self, perm) -> "MolecularGraph":
        """Relabel atoms so new atom k is old atom ``perm[k]``."""
        perm = list(perm)
        inv = {old: new for new, old in enumerate(perm)}
        atoms = [self.atoms[o] for o in perm]
        bonds = [tuple(sorted((inv[i], inv[j]))) + (order,) for i, j, order in self.bonds]
        g = MolecularGraph(atoms, bonds, self.smiles)
        if self.features is not None:
            g.features = self.features[perm]
        return g


# ---------------------------------------------------------------------------
# parser


class _Parser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0
        self.atoms: list[Atom] = []
        self.bonds: dict[tuple[int, int], float] = {}
        self.explicit: dict[tuple[int, int], bool] = {}
        self.rings: dict[int, tuple[int, float | None, int]] = {}

    def error(self, cls, msg, offset=None):
        raise cls(msg, self.i if offset is None else offset)

    def parse(self):
        s = self.s
        prev = None
        pending_bond = None
        pending_at = None
        stack = []  # (atom index, offset of '(')
        while self.i < len(s):
            ch = s[self.i]
            start = self.i
            if ch == "(":
                if prev is None:
                    self.error(SmilesSyntaxError, "branch before any atom")
                stack.append((prev, start))
                self.i += 1
            elif ch == ")":
                if not stack:
                    self.error(UnbalancedParenthesis, "unmatched ')'")
                if pending_bond is not None:
                    self.error(SmilesSyntaxError, "bond symbol before ')'")
                prev = stack.pop()[0]
                self.i += 1
            elif ch in BOND_ORDERS:
                pending_bond, pending_at = BOND_ORDERS[ch], start
                self.i += 1
            elif ch in "/\\":
                # directional single bond; stereo discarded
                pending_bond, pending_at = 1.0, start
                self.i += 1
            elif ch == ".":
                prev = None
                pending_bond = None
                self.i += 1
            elif ch.isdigit() or ch == "%":
                if prev is None:
                    self.error(SmilesSyntaxError, "ring bond before any atom")
                self._ring(prev, pending_bond, start)
                pending_bond = None
            elif ch == "[" or ch.isalpha() or ch == "*":
                idx = self._atom()
                if prev is not None:
                    self._bond(prev, idx, pending_bond)
                elif pending_bond is not None:
                    self.error(SmilesSyntaxError, "bond symbol without a preceding atom", pending_at)
                pending_bond = None
                prev = idx
            else:
                self.error(SmilesSyntaxError, f"unexpected character {ch!r}")
        if stack:
            self.error(UnbalancedParenthesis, "unclosed '('", stack[-1][1])
        if self.rings:
            digit, (_, _, off) = next(iter(self.rings.items()))
            self.error(UnclosedRingBond, f"ring bond {digit} never closed", off)
        if pending_bond is not None:
            self.error(SmilesSyntaxError, "trailing bond symbol", pending_at)

    def _ring(self, atom, bond, start):
        s = self.s
        if s[self.i] == "%":
            digits = s[self.i + 1:self.i + 3]
            if len(digits) != 2 or not digits.isdigit():
                self.error(SmilesSyntaxError, "'%' must be followed by two digits")
            num = int(digits)
            self.i += 3
        else:
            num = int(s[self.i])
            self.i += 1
        if num in self.rings:
            other, other_bond, off = self.rings.pop(num)
            if other == atom:
                self.error(SmilesSyntaxError, "ring bond closes on its own atom", start)
            if bond is not None and other_bond is not None and bond != other_bond:
                self.error(SmilesSyntaxError, f"conflicting bond orders on ring bond {num}", start)
            self._bond(other, atom, bond if bond is not None else other_bond)
        else:
            self.rings[num] = (atom, bond, start)

    def _bond(self, i, j, order):
        key = (min(i, j), max(i, j))
        if key in self.bonds:
            self.error(SmilesSyntaxError, "duplicate bond between the same atoms")
        explicit = order is not None
        if order is None:
            both_aromatic = self.atoms[i].is_aromatic and self.atoms[j].is_aromatic
            order = AROMATIC_ORDER if both_aromatic else 1.0
        self.bonds[key] = order
        self.explicit[key] = explicit

    def _atom(self) -> int:
        s = self.s
        start = self.i
        if s[self.i] == "[":
            atom = self._bracket_atom()
        else:
            two = s[self.i:self.i + 2]
            if two in ("Cl", "Br"):
                atom = Atom(two)
                self.i += 2
            elif s[self.i] in ORGANIC_VALENCES:
                atom = Atom(s[self.i])
                self.i += 1
            elif s[self.i] in AROMATIC_ORGANIC:
                atom = Atom(AROMATIC_ORGANIC[s[self.i]], is_aromatic=True)
                self.i += 1
            elif s[self.i] == "*":
                self.error(UnknownElement, "wildcard atom '*' is not supported", start)
            else:
                self.error(UnknownElement, f"unknown organic-subset symbol {s[self.i]!r}", start)
        self.atoms.append(atom)
        return len(self.atoms) - 1

    def _bracket_atom(self) -> Atom:
        s = self.s
        open_at = self.i
        close = s.find("]", self.i)
        if close < 0:
            self.error(SmilesSyntaxError, "unclosed '['", open_at)
        body = s[self.i + 1:close]
        j = 0
        iso = ""
        while j < len(body) and body[j].isdigit():
            iso += body[j]
            j += 1
        sym_at = open_at + 1 + j
        aromatic = False
        element = None
        if body[j:j + 2] in AROMATIC_BRACKET:
            element, aromatic = AROMATIC_BRACKET[body[j:j + 2]], True
            j += 2
        elif body[j:j + 2] in PERIODIC_TABLE and len(body[j:j + 2]) == 2 and body[j + 1].islower():
            element = body[j:j + 2]
            j += 2
        elif body[j:j + 1] in AROMATIC_BRACKET:
            element, aromatic = AROMATIC_BRACKET[body[j]], True
            j += 1
        elif body[j:j + 1] in PERIODIC_TABLE:
            element = body[j]
            j += 1
        if element is None:
            self.error(UnknownElement, f"unknown element in bracket atom [{body}]", sym_at)
        while j < len(body) and body[j] == "@":
            j += 1
        if body[j:j + 2] in ("TH", "AL", "SP", "TB", "OH"):
            j += 2
            while j < len(body) and body[j].isdigit():
                j += 1
        hcount = 0
        if j < len(body) and body[j] == "H":
            j += 1
            digits = ""
            while j < len(body) and body[j].isdigit():
                digits += body[j]
                j += 1
            hcount = int(digits) if digits else 1
        charge = 0
        if j < len(body) and body[j] in "+-":
            sign = 1 if body[j] == "+" else -1
            j += 1
            if j < len(body) and body[j].isdigit():
                digits = ""
                while j < len(body) and body[j].isdigit():
                    digits += body[j]
                    j += 1
                charge = sign * int(digits)
            else:
                charge = sign
                while j < len(body) and body[j] == ("+" if sign > 0 else "-"):
                    charge += sign
                    j += 1
        if j < len(body) and body[j] == ":":
            j += 1
            while j < len(body) and body[j].isdigit():
                j += 1
        if j != len(body):
            self.error(SmilesSyntaxError, f"unparsed text in bracket atom [{body}]", open_at + 1 + j)
        self.i = close + 1
        return Atom(element, is_aromatic=aromatic, formal_charge=charge, implicit_hydrogens=hcount,
                    bracket=True, isotope=int(iso) if iso else None)


def _implicit_h(atom: Atom, bond_orders: list[float]) -> int:
    if atom.bracket:
        return atom.implicit_hydrogens
    valences = ORGANIC_VALENCES[atom.element]
    if atom.is_aromatic:
        # aromatic bonds count 1 each; carbon-like atoms also lend one to the pi system
        used = sum(1.0 if o == AROMATIC_ORDER else o for o in bond_orders)
        if atom.element not in _LONE_PAIR_DONORS:
            used += 1
        return max(0, int(valences[0] - used))
    used = sum(bond_orders)
    for v in valences:
        if v >= used:
            return int(round(v - used))
    return 0


def parse_smiles(smiles: str) -> MolecularGraph:
    """Parse one SMILES string; atoms keep SMILES token order."""
    if smiles is None or not smiles.strip():
        raise EmptyInput("empty SMILES string", 0)
    text = smiles.strip()
    try:
        text.encode("ascii")
    except UnicodeEncodeError as e:
        raise SmilesSyntaxError("non-ASCII character", e.start) from None
    p = _Parser(text)
    p.parse()
    if not p.atoms:
        raise EmptyInput("SMILES contains no atoms", 0)
    orders: list[list[float]] = [[] for _ in p.atoms]
    for (i, j), o in p.bonds.items():
        orders[i].append(o)
        orders[j].append(o)
    for atom, bo in zip(p.atoms, orders):
        atom.degree = len(bo)
        atom.implicit_hydrogens = _implicit_h(atom, bo)
    bonds = [(i, j, o) for (i, j), o in sorted(p.bonds.items())]
    g = MolecularGraph(p.atoms, bonds, text)
    g.features = featurize(g)
    return g


# ---------------------------------------------------------------------------
# features


def _one_hot(value: int, size: int, offset: int = 0) -> np.ndarray:
    v = np.zeros(size, dtype=np.float32)
    v[min(max(value - offset, 0), size - 1)] = 1.0
    return v


def atom_features(atom: Atom) -> np.ndarray:
    slot = ELEMENT_SLOTS.index(atom.element) if atom.element in ELEMENT_SLOTS else len(ELEMENT_SLOTS) - 1
    lo, hi = CHARGE_RANGE
    return np.concatenate([
        _one_hot(slot, len(ELEMENT_SLOTS)),
        _one_hot(atom.degree, MAX_COUNT + 1),
        _one_hot(atom.implicit_hydrogens, MAX_COUNT + 1),
        _one_hot(atom.formal_charge, hi - lo + 1, offset=lo),
        np.array([1.0 if atom.is_aromatic else 0.0], dtype=np.float32),
    ])


def featurize(graph: MolecularGraph) -> np.ndarray:
    """n x 78 feature matrix, one row per atom."""
    if not graph.atoms:
        return np.zeros((0, N_FEATURES), dtype=np.float32)
    return np.stack([atom_features(a) for a in graph.atoms])


# ---------------------------------------------------------------------------
# serialization


def _order_json(o: float):
    return 1.5 if o == AROMATIC_ORDER else int(o)


def graph_to_dict(g: MolecularGraph) -> dict:
    feats = g.features if g.features is not None else featurize(g)
    return {
        "format": "adgsyn-graph",
        "version": GRAPH_FORMAT_VERSION,
        "feature_layout": FEATURE_LAYOUT,
        "smiles": g.smiles,
        "atoms": [
            {"element": a.element, "aromatic": a.is_aromatic, "charge": a.formal_charge,
             "hydrogens": a.implicit_hydrogens, "degree": a.degree}
            for a in g.atoms
        ],
        "bonds": [[i, j, _order_json(o)] for i, j, o in g.bonds],
        "features": feats.astype(np.int8).tolist(),
    }


def graph_from_dict(d: dict) -> MolecularGraph:
    if d.get("format") != "adgsyn-graph" or d.get("version") != GRAPH_FORMAT_VERSION:
        raise ValueError(f"unsupported graph record: format={d.get('format')} version={d.get('version')}")
    if d.get("feature_layout") != FEATURE_LAYOUT:
        raise ValueError(f"feature layout {d.get('feature_layout')} != {FEATURE_LAYOUT}")
    atoms = [Atom(a["element"], a["aromatic"], a["charge"], a["hydrogens"], a["degree"]) for a in d["atoms"]]
    bonds = [(int(i), int(j), float(o)) for i, j, o in d["bonds"]]
    g = MolecularGraph(atoms, bonds, d.get("smiles", ""))
    g.features = np.asarray(d["features"], dtype=np.float32).reshape(len(atoms), N_FEATURES)
    return g


def save_graph_cache(path, graphs: list, errors: list | None = None):
    payload = {
        "format": "adgsyn-graph-cache",
        "version": GRAPH_FORMAT_VERSION,
        "feature_layout": FEATURE_LAYOUT,
        "graphs": [graph_to_dict(g) for g in graphs],
        "errors": errors or [],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, separators=(",", ":"))


def load_graph_cache(path) -> list:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != "adgsyn-graph-cache":
        raise ValueError(f"{path} is not a graph cache")
    return [graph_from_dict(d) for d in payload["graphs"]]
