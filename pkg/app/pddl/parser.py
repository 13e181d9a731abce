# app/pddl/parser.py
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

from app.exceptions import PDDLSemanticError, PDDLSyntaxError, UnsupportedRequirementError
from app.pddl.schemas import (
    ROOT_TYPE,
    ActionSchema,
    Atom,
    Domain,
    Literal,
    Predicate,
    Problem,
    TypedName,
)

SUPPORTED_REQUIREMENTS = (":strips", ":typing", ":negative-preconditions")

_TOKEN = re.compile(r"\(|\)|[^\s()]+")


# ============================
# S-expression reader
# ============================

@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int


class SExpr(list):
    """A parenthesized list that remembers where it was opened."""

    def __init__(self, line: int, column: int):
        super().__init__()
        self.line = line
        self.column = column


Node = Union[Token, SExpr]


def tokenize(text: str) -> List[Token]:
    tokens = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0]
        for match in _TOKEN.finditer(line):
            tokens.append(Token(match.group(0).lower(), lineno, match.start() + 1))
    return tokens


def read_sexpr(text: str) -> SExpr:
    """
    Reads exactly one top-level s-expression.
    Names are lower-cased; comments run from ';' to end of line.
    """
    tokens = tokenize(text)
    if not tokens:
        raise PDDLSyntaxError("empty input", 1, 1)
    stack: List[SExpr] = []
    root: Optional[SExpr] = None
    for tok in tokens:
        if tok.text == "(":
            node = SExpr(tok.line, tok.column)
            if stack:
                stack[-1].append(node)
            elif root is not None:
                raise PDDLSyntaxError("unexpected content after the top-level expression", tok.line, tok.column)
            else:
                root = node
            stack.append(node)
        elif tok.text == ")":
            if not stack:
                raise PDDLSyntaxError("unbalanced ')'", tok.line, tok.column)
            stack.pop()
        else:
            if not stack:
                raise PDDLSyntaxError(f"unexpected token '{tok.text}' outside parentheses", tok.line, tok.column)
            stack[-1].append(tok)
    if stack:
        last = tokens[-1]
        raise PDDLSyntaxError("unexpected end of input, missing ')'", last.line, last.column)
    return root


# ============================
# Helpers
# ============================

def _where(node: Node) -> Tuple[int, int]:
    return node.line, node.column


def _expect_list(node: Node, what: str) -> SExpr:
    if not isinstance(node, SExpr):
        raise PDDLSyntaxError(f"expected {what}, found '{node.text}'", *_where(node))
    return node


def _symbol(node: Node, what: str) -> str:
    if not isinstance(node, Token):
        raise PDDLSyntaxError(f"expected {what}, found a list", *_where(node))
    return node.text


def _head(node: SExpr) -> Optional[str]:
    if node and isinstance(node[0], Token):
        return node[0].text
    return None


def parse_typed_list(items: List[Node]) -> List[TypedName]:
    """Parses `a b - t c` into typed names; untyped names default to object."""
    result: List[TypedName] = []
    pending: List[str] = []
    i = 0
    while i < len(items):
        item = items[i]
        if isinstance(item, SExpr):
            if _head(item) == "either":
                raise UnsupportedRequirementError(":union-types (either)")
            raise PDDLSyntaxError("unexpected list inside typed list", *_where(item))
        if item.text == "-":
            if i + 1 >= len(items):
                raise PDDLSyntaxError("missing type after '-'", item.line, item.column)
            type_node = items[i + 1]
            if isinstance(type_node, SExpr) and _head(type_node) == "either":
                raise UnsupportedRequirementError(":union-types (either)")
            type_name = _symbol(type_node, "type name")
            if not pending:
                raise PDDLSyntaxError("type given without names", item.line, item.column)
            result.extend(TypedName(n, type_name) for n in pending)
            pending = []
            i += 2
            continue
        pending.append(item.text)
        i += 1
    result.extend(TypedName(n, ROOT_TYPE) for n in pending)
    return result


def _parse_atom(node: Node) -> Atom:
    node = _expect_list(node, "an atom")
    if not node:
        raise PDDLSyntaxError("empty atom", *_where(node))
    parts = [_symbol(n, "atom argument") for n in node]
    if parts[0] == "=":
        raise UnsupportedRequirementError(":equality")
    if parts[0] in ("and", "or", "not", "imply", "exists", "forall", "when"):
        raise PDDLSyntaxError(f"expected an atom, found '{parts[0]}'", *_where(node))
    return Atom(parts[0], tuple(parts[1:]))


def _parse_literal(node: Node) -> Literal:
    node = _expect_list(node, "a literal")
    head = _head(node)
    if head == "not":
        if len(node) != 2:
            raise PDDLSyntaxError("'not' takes exactly one atom", *_where(node))
        inner = _expect_list(node[1], "an atom")
        if _head(inner) == "not":
            raise PDDLSyntaxError("double negation is not supported", *_where(inner))
        return Literal(_parse_atom(inner), positive=False)
    if head in ("or", "imply", "exists", "forall"):
        raise UnsupportedRequirementError(":disjunctive-preconditions" if head in ("or", "imply") else ":quantified-preconditions")
    if head == "when":
        raise UnsupportedRequirementError(":conditional-effects")
    if head in ("increase", "decrease", "assign"):
        raise UnsupportedRequirementError(":action-costs")
    return Literal(_parse_atom(node), positive=True)


def _parse_conjunction(node: Node) -> List[Literal]:
    node = _expect_list(node, "a condition")
    if not node:
        return []
    if _head(node) == "and":
        return [_parse_literal(child) for child in node[1:]]
    return [_parse_literal(node)]


def parse_literal(text: str) -> Literal:
    """Parses a single literal such as `(at tomato fridge)` or `(not (lit roomlight))`."""
    text = text.strip()
    if not text.startswith("("):
        text = f"({text})"
    return _parse_literal(read_sexpr(text))


def _check_requirements(section: SExpr) -> Tuple[str, ...]:
    reqs = []
    for node in section[1:]:
        req = _symbol(node, "requirement")
        if req not in SUPPORTED_REQUIREMENTS:
            raise UnsupportedRequirementError(req)
        reqs.append(req)
    return tuple(reqs)


def _define_header(root: SExpr, kind: str) -> str:
    if _head(root) != "define":
        raise PDDLSyntaxError("expected (define ...)", *_where(root))
    if len(root) < 2:
        raise PDDLSyntaxError(f"missing ({kind} NAME)", *_where(root))
    header = _expect_list(root[1], f"({kind} NAME)")
    if _head(header) != kind or len(header) != 2:
        raise PDDLSyntaxError(f"expected ({kind} NAME)", *_where(header))
    return _symbol(header[1], f"{kind} name")


# ============================
# Domain
# ============================

def _parse_action(section: SExpr) -> ActionSchema:
    if len(section) < 2:
        raise PDDLSyntaxError("action without a name", *_where(section))
    name = _symbol(section[1], "action name")
    params: List[TypedName] = []
    pre: List[Literal] = []
    add: List[Atom] = []
    delete: List[Atom] = []
    i = 2
    while i < len(section):
        key = _symbol(section[i], "action keyword")
        if i + 1 >= len(section):
            raise PDDLSyntaxError(f"missing value for {key}", *_where(section[i]))
        value = section[i + 1]
        if key == ":parameters":
            params = parse_typed_list(list(_expect_list(value, "parameter list")))
        elif key == ":precondition":
            pre = _parse_conjunction(value)
        elif key == ":effect":
            for lit in _parse_conjunction(value):
                (add if lit.positive else delete).append(lit.atom)
        else:
            raise PDDLSyntaxError(f"unknown action keyword {key}", *_where(section[i]))
        i += 2
    try:
        return ActionSchema(name, tuple(params), tuple(pre), tuple(add), tuple(delete))
    except PDDLSemanticError as e:
        raise PDDLSemanticError(f"{e} (line {section.line})") from e


def _check_schema_atoms(domain: Domain) -> None:
    for action in domain.actions:
        atoms = [lit.atom for lit in action.pre] + list(action.add) + list(action.delete)
        for atom in atoms:
            pred = domain.predicate(atom.predicate)
            if pred is None:
                raise PDDLSemanticError(f"action {action.name} uses undeclared predicate {atom.predicate}")
            if pred.arity != len(atom.args):
                raise PDDLSemanticError(
                    f"action {action.name}: {atom} has {len(atom.args)} arguments, {atom.predicate} takes {pred.arity}"
                )
        for p in action.params:
            if p.type != ROOT_TYPE and p.type not in domain.type_parents:
                raise PDDLSemanticError(f"action {action.name}: unknown type {p.type}")


def parse_domain(text: str) -> Domain:
    root = read_sexpr(text)
    name = _define_header(root, "domain")
    requirements: Tuple[str, ...] = ()
    types: List[Tuple[str, str]] = []
    predicates: List[Predicate] = []
    actions: List[ActionSchema] = []

    for section in root[2:]:
        section = _expect_list(section, "a domain section")
        head = _head(section)
        if head == ":requirements":
            requirements = _check_requirements(section)
        elif head == ":types":
            for typed in parse_typed_list(list(section[1:])):
                if typed.name == ROOT_TYPE:
                    continue
                types.append((typed.name, typed.type))
        elif head == ":predicates":
            for decl in section[1:]:
                decl = _expect_list(decl, "predicate declaration")
                if not decl:
                    raise PDDLSyntaxError("empty predicate declaration", *_where(decl))
                pname = _symbol(decl[0], "predicate name")
                predicates.append(Predicate(pname, tuple(parse_typed_list(list(decl[1:])))))
        elif head == ":action":
            actions.append(_parse_action(section))
        elif head in (":functions", ":durative-action", ":derived"):
            raise UnsupportedRequirementError(head)
        elif head == ":constants":
            raise UnsupportedRequirementError(":constants")
        else:
            raise PDDLSyntaxError(f"unknown domain section {head}", *_where(section))

    declared = {t for t, _ in types}
    for _, parent in list(types):
        if parent != ROOT_TYPE and parent not in declared:
            types.append((parent, ROOT_TYPE))
            declared.add(parent)

    domain = Domain(name, requirements, tuple(types), tuple(predicates), tuple(actions))
    _check_schema_atoms(domain)
    return domain


# ============================
# Problem
# ============================

def parse_problem(text: str, domain: Optional[Domain] = None) -> Problem:
    root = read_sexpr(text)
    name = _define_header(root, "problem")
    domain_name = ""
    objects: List[TypedName] = []
    init: List[Atom] = []
    goal: List[Literal] = []

    for section in root[2:]:
        section = _expect_list(section, "a problem section")
        head = _head(section)
        if head == ":domain":
            domain_name = _symbol(section[1], "domain name") if len(section) == 2 else ""
            if not domain_name:
                raise PDDLSyntaxError("expected (:domain NAME)", *_where(section))
        elif head == ":requirements":
            _check_requirements(section)
        elif head == ":objects":
            objects.extend(parse_typed_list(list(section[1:])))
        elif head == ":init":
            for node in section[1:]:
                node = _expect_list(node, "an initial atom")
                if _head(node) == "not":
                    raise PDDLSyntaxError("negative literals are not allowed in :init", *_where(node))
                init.append(_parse_atom(node))
        elif head == ":goal":
            if len(section) != 2:
                raise PDDLSyntaxError("expected exactly one goal condition", *_where(section))
            goal = _parse_conjunction(section[1])
        elif head == ":metric":
            raise UnsupportedRequirementError(":action-costs")
        else:
            raise PDDLSyntaxError(f"unknown problem section {head}", *_where(section))

    problem = Problem(name, domain_name, tuple(objects), frozenset(init), tuple(goal))
    if domain is not None:
        check_problem(domain, problem)
    return problem


def check_problem(domain: Domain, problem: Problem) -> None:
    """Checks that init/goal use declared predicates, arities and objects."""
    objects: Dict[str, str] = {}
    for obj in problem.objects:
        if obj.name in objects:
            raise PDDLSemanticError(f"object {obj.name} declared twice")
        if obj.type != ROOT_TYPE and obj.type not in domain.type_parents:
            raise PDDLSemanticError(f"object {obj.name} has unknown type {obj.type}")
        objects[obj.name] = obj.type

    def check(atom: Atom, where: str) -> None:
        pred = domain.predicate(atom.predicate)
        if pred is None:
            raise PDDLSemanticError(f"{where}: undeclared predicate {atom.predicate}")
        if pred.arity != len(atom.args):
            raise PDDLSemanticError(f"{where}: {atom} has wrong arity, {atom.predicate} takes {pred.arity}")
        for arg, param in zip(atom.args, pred.params):
            if arg not in objects:
                raise PDDLSemanticError(f"{where}: {atom} uses undeclared object {arg}")
            if not domain.is_subtype(objects[arg], param.type):
                raise PDDLSemanticError(f"{where}: {atom} argument {arg} is not a {param.type}")

    for atom in sorted(problem.init):
        check(atom, ":init")
    for lit in problem.goal:
        check(lit.atom, ":goal")
