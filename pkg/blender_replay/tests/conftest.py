"""Test fixtures: a minimal in-memory stand-in for the bpy API.

The fake records every operator invocation and models just enough scene
state (active object, mesh element lists, modifier stack) for the
executor's control flow to run. Geometry is NOT simulated; tests assert
on the operator call log and on state transitions, not on shapes.
"""

from __future__ import annotations

import os
import sys
import types
from dataclasses import dataclass, field

import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))


class Vector(tuple):
    def __new__(cls, seq):
        return super().__new__(cls, tuple(float(c) for c in seq))

    def __add__(self, other):
        return Vector(a + b for a, b in zip(self, other))


@dataclass
class FakeElem:
    index: int
    select: bool = False


@dataclass
class FakeEdge:
    index: int
    vertices: tuple
    select: bool = False


@dataclass
class FakeVertex:
    index: int
    co: Vector = field(default_factory=lambda: Vector((0.0, 0.0, 0.0)))
    select: bool = False


class FakeMesh:
    def __init__(self, nv=8, edges=(), nf=6):
        self.vertices = [FakeVertex(i) for i in range(nv)]
        self.edges = [FakeEdge(i, tuple(e)) for i, e in enumerate(edges)]
        self.polygons = [FakeElem(i) for i in range(nf)]


class FakeModifier:
    def __init__(self, name, type_):
        self.name = name
        self.type = type_

    def __setattr__(self, key, value):
        object.__setattr__(self, key, value)


class FakeModifiers(list):
    def new(self, name, type_):
        mod = FakeModifier(name, type_)
        self.append(mod)
        return mod


class FakeObject:
    def __init__(self, data=None):
        self.data = data or FakeMesh()
        self.modifiers = FakeModifiers()
        self.scale = (1.0, 1.0, 1.0)
        self.rotation_euler = (0.0, 0.0, 0.0)
        self.location = (0.0, 0.0, 0.0)


class OpCall:
    """Attribute chain that records terminal calls into a shared log."""

    def __init__(self, log, path=""):
        self._log = log
        self._path = path

    def __getattr__(self, name):
        return OpCall(self._log, f"{self._path}.{name}" if self._path else name)

    def __call__(self, *args, **kwargs):
        self._log.append((self._path, kwargs))
        return {"FINISHED"}


class FakeBpy(types.ModuleType):
    def __init__(self, version=(4, 0, 2)):
        super().__init__("bpy")
        self.calls: list[tuple[str, dict]] = []
        self.app = types.SimpleNamespace(version=version)
        obj = FakeObject()
        self.context = types.SimpleNamespace(
            active_object=obj,
            view_layer=types.SimpleNamespace(
                objects=types.SimpleNamespace(active=obj)))
        self.data = types.SimpleNamespace(
            objects=types.SimpleNamespace(
                remove=lambda o, do_unlink=True: self.calls.append(
                    ("data.objects.remove", {}))))
        self.ops = OpCall(self.calls)

    def op_names(self):
        return [name for name, _ in self.calls]


@pytest.fixture
def fake_bpy(monkeypatch):
    bpy = FakeBpy()
    mathutils = types.ModuleType("mathutils")
    mathutils.Vector = Vector
    monkeypatch.setitem(sys.modules, "bpy", bpy)
    monkeypatch.setitem(sys.modules, "mathutils", mathutils)
    return bpy
