"""Catalog loading, precedence validation, and belief-state algebra."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from coassembly.catalog import (
    BeliefState,
    Catalog,
    ComponentSpec,
    CatalogSchemaError,
    CyclicPrecedence,
    DuplicateId,
    DuplicateInSequence,
    EmptyCatalog,
    UnknownComponent,
    UnknownPrerequisite,
    default_catalog,
    feasible_set,
    load_catalog,
    update_available,
    validate_sequence,
)


@pytest.fixture()
def catalog() -> Catalog:
    return default_catalog()


def make_document(components):
    return {"components": components}


class TestLoadCatalog:
    """Schema and semantic validation of catalog documents."""

    def test_default_catalog_shape(self, catalog):
        assert len(catalog) == 9
        assert catalog.ids == frozenset(range(1, 10))
        assert catalog.deliverable_ids == frozenset(range(3, 10))
        assert catalog[9].prerequisites == frozenset(range(1, 9))

    def test_duplicate_id_rejected(self):
        doc = make_document(
            [
                {"id": 1, "name": "a"},
                {"id": 1, "name": "b"},
            ]
        )
        with pytest.raises(DuplicateId) as err:
            load_catalog(doc)
        assert err.value.ids == [1]

    def test_unknown_prerequisite_rejected(self):
        doc = make_document(
            [
                {"id": 1, "name": "a"},
                {"id": 2, "name": "b", "prerequisites": [7]},
            ]
        )
        with pytest.raises(UnknownPrerequisite) as err:
            load_catalog(doc)
        assert err.value.component == 2
        assert err.value.missing == [7]

    def test_cycle_rejected(self):
        doc = make_document(
            [
                {"id": 1, "name": "a", "prerequisites": [2]},
                {"id": 2, "name": "b", "prerequisites": [1]},
            ]
        )
        with pytest.raises(CyclicPrecedence) as err:
            load_catalog(doc)
        assert set(err.value.ids) == {1, 2}

    def test_self_prerequisite_is_a_cycle(self):
        with pytest.raises(CyclicPrecedence):
            ComponentSpec(id=1, name="a", prerequisites=frozenset([1]))

    def test_empty_catalog_rejected(self):
        with pytest.raises(EmptyCatalog):
            load_catalog(make_document([]))

    def test_unknown_component_field_rejected(self):
        doc = make_document([{"id": 1, "name": "a", "colour": "red"}])
        with pytest.raises(CatalogSchemaError):
            load_catalog(doc)

    def test_unknown_top_level_field_rejected(self):
        with pytest.raises(CatalogSchemaError):
            load_catalog({"components": [{"id": 1, "name": "a"}], "extra": 1})

    def test_gapped_ids_rejected(self):
        doc = make_document(
            [
                {"id": 1, "name": "a"},
                {"id": 3, "name": "b"},
            ]
        )
        with pytest.raises(CatalogSchemaError):
            load_catalog(doc)

    def test_bool_is_not_an_id(self):
        with pytest.raises(CatalogSchemaError):
            load_catalog(make_document([{"id": True, "name": "a"}]))


class TestFeasibleSet:
    """Next-component feasibility under the precedence rules."""

    def test_nothing_assembled(self, catalog):
        assert feasible_set(set(), catalog) == {1}

    def test_base_chain_complete(self, catalog):
        assert feasible_set({1, 2, 3, 4}, catalog) == {5, 6, 7, 8}

    def test_final_component_needs_everything(self, catalog):
        assert feasible_set(set(range(1, 9)), catalog) == {9}

    def test_all_assembled(self, catalog):
        assert feasible_set(set(range(1, 10)), catalog) == frozenset()

    def test_unknown_id_rejected(self, catalog):
        with pytest.raises(UnknownComponent):
            feasible_set({42}, catalog)

    def test_members_are_unassembled_with_met_prerequisites(self, catalog):
        assembled = {1, 2, 3}
        for cid in feasible_set(assembled, catalog):
            assert cid not in assembled
            assert catalog.prerequisites(cid) <= assembled


class TestValidateSequence:
    """Assembly order checking against an independent prefix recount."""

    def test_identity_order_valid(self, catalog):
        assert validate_sequence(list(range(1, 10)), catalog).ok

    def test_violation_reports_first_bad_index(self, catalog):
        verdict = validate_sequence([1, 2, 4, 3], catalog)
        assert not verdict.ok
        assert verdict.violation_index == 2
        assert verdict.missing == {3}

    def test_duplicate_rejected(self, catalog):
        with pytest.raises(DuplicateInSequence):
            validate_sequence([1, 2, 2], catalog)

    def test_unknown_id_rejected(self, catalog):
        with pytest.raises(UnknownComponent):
            validate_sequence([1, 99], catalog)

    def test_partial_prefix_valid(self, catalog):
        assert validate_sequence([1, 2, 3], catalog).ok


def random_catalogs(max_size: int = 8):
    """Catalogs with prerequisites drawn from lower ids, hence acyclic."""

    def build(prereq_picks: list[list[int]]) -> Catalog:
        specs = []
        for i, picks in enumerate(prereq_picks, start=1):
            prereqs = frozenset(p for p in picks if p < i)
            specs.append(ComponentSpec(id=i, name=f"part {i}", prerequisites=prereqs))
        return Catalog(specs)

    return st.lists(
        st.lists(st.integers(min_value=1, max_value=max_size), max_size=4),
        min_size=1,
        max_size=max_size,
    ).map(build)


@given(random_catalogs(), st.data())
def test_feasible_set_matches_componentwise_recount(catalog, data):
    assembled = data.draw(st.sets(st.sampled_from(sorted(catalog.ids))))
    got = feasible_set(assembled, catalog)
    expected = set()
    for spec in catalog:
        if spec.id not in assembled and all(p in assembled for p in spec.prerequisites):
            expected.add(spec.id)
    assert got == expected


@given(random_catalogs(), st.data())
def test_greedy_feasible_order_always_validates(catalog, data):
    assembled: set[int] = set()
    order = []
    while True:
        options = sorted(feasible_set(assembled, catalog))
        if not options:
            break
        choice = data.draw(st.sampled_from(options))
        order.append(choice)
        assembled.add(choice)
    assert len(order) == len(catalog)
    assert validate_sequence(order, catalog).ok


@given(
    st.sets(st.integers(1, 9)),
    st.sets(st.integers(1, 9)),
)
def test_update_available_is_exact_complement(detected, brought):
    initial = frozenset(range(1, 10))
    belief = BeliefState(
        detected=frozenset(detected),
        brought=frozenset(brought),
        available=initial,
        initial=initial,
    )
    updated = update_available(belief)
    assert updated.available == initial - (frozenset(detected) | frozenset(brought))
    assert update_available(updated) == updated
    assert updated.available.isdisjoint(updated.detected | updated.brought)
