"""Tests for addressing, slot memory and the matrix NTM forward pass."""
import numpy as np
import pytest

from matcap.autodiff import grad_check
from matcap.config import REFERENCE_PARAMETER_COUNTS, preset
from matcap.errors import ShapeMismatch
from matcap.linalg import seeded_rng
from matcap.matntm import (
    MatNtmModel,
    MatrixRnnModel,
    address,
    build_model,
    controller_step,
    forward_sequence,
    matrix_rnn_baseline,
    read,
    single_slot_unroll,
    write,
)
from matcap.models import MemoryBank
from matcap.tasks import gen_copy_task


def _bank(rng, slots=4, size=2):
    return MemoryBank(rng.standard_normal((slots, size, size)))


# --- address ---

class TestAddress:
    def test_zero_beta_is_uniform(self, rng):
        bank = _bank(rng)
        w = address(bank, np.array([1.0, 0, 0, 0]), rng.standard_normal((2, 2)), 0.0, 1.0, np.array([0, 1.0, 0]), 1.0)
        assert np.allclose(w, 0.25)

    def test_gate_closed_shifts_previous(self, rng):
        bank = _bank(rng)
        prev = np.array([1.0, 0, 0, 0])
        w = address(bank, prev, rng.standard_normal((2, 2)), 5.0, 0.0, np.array([0, 0, 1.0]), 1.0)
        assert np.allclose(w, [0, 1.0, 0, 0], atol=1e-12)

    def test_wraps_around(self, rng):
        bank = _bank(rng)
        prev = np.array([1.0, 0, 0, 0])
        w = address(bank, prev, np.eye(2), 1.0, 0.0, np.array([1.0, 0, 0]), 1.0)
        assert np.allclose(w, [0, 0, 0, 1.0], atol=1e-12)

    def test_content_focus(self):
        slots = np.stack([np.eye(2), -np.eye(2), np.array([[0, 1.0], [1.0, 0]])])
        w = address(MemoryBank(slots), np.full(3, 1 / 3), np.eye(2), 50.0, 1.0, np.array([0, 1.0, 0]), 1.0)
        assert np.argmax(w) == 0
        assert w[0] > 0.99

    def test_is_distribution(self, rng):
        bank = _bank(rng, slots=6)
        prev = rng.random(6)
        prev /= prev.sum()
        w = address(bank, prev, rng.standard_normal((2, 2)), 2.0, 0.4, np.array([0.2, 0.5, 0.3]), 2.5)
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0)

    def test_key_shape_checked(self, rng):
        with pytest.raises(ShapeMismatch):
            address(_bank(rng), np.full(4, 0.25), np.eye(3), 1.0, 1.0, np.array([0, 1.0, 0]), 1.0)


# --- read / write ---

class TestReadWrite:
    def test_read_one_hot(self, rng):
        bank = _bank(rng)
        assert np.array_equal(read(bank, np.array([0, 0, 1.0, 0])), bank.slots[2])

    def test_read_mixture(self):
        bank = MemoryBank(np.stack([np.eye(2), 3 * np.eye(2)]))
        assert np.allclose(read(bank, np.array([0.5, 0.5])), 2 * np.eye(2))

    def test_write_replaces_slot(self, rng):
        bank = _bank(rng, slots=2)
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = write(bank, np.array([1.0, 0.0]), np.ones((2, 2)), A)
        assert np.array_equal(out.slots[0], A)
        assert np.array_equal(out.slots[1], bank.slots[1])

    def test_write_returns_new_bank(self, rng):
        bank = _bank(rng, slots=2)
        before = bank.slots.copy()
        write(bank, np.array([0.5, 0.5]), np.ones((2, 2)), np.ones((2, 2)))
        assert np.array_equal(bank.slots, before)

    def test_zero_weight_is_noop(self, rng):
        bank = _bank(rng)
        out = write(bank, np.zeros(4), rng.random((2, 2)), rng.random((2, 2)))
        assert np.array_equal(out.slots, bank.slots)

    def test_weight_length_checked(self, rng):
        with pytest.raises(ShapeMismatch):
            read(_bank(rng), np.ones(3))


# --- single_slot_unroll ---

class TestSingleSlotUnroll:
    def test_matches_sequential_writes(self, rng):
        erase = [rng.random((3, 3)) for _ in range(6)]
        add = [rng.standard_normal((3, 3)) for _ in range(6)]
        bank = MemoryBank(np.zeros((1, 3, 3)))
        for Er, A in zip(erase, add):
            bank = write(bank, np.array([1.0]), Er, A)
        assert np.max(np.abs(single_slot_unroll(erase, add) - bank.slots[0])) <= 1e-12

    def test_full_erase_keeps_last_add(self, rng):
        add = [rng.standard_normal((2, 2)) for _ in range(4)]
        erase = [np.ones((2, 2))] * 4
        assert np.allclose(single_slot_unroll(erase, add), add[-1])

    def test_length_mismatch(self):
        with pytest.raises(ShapeMismatch):
            single_slot_unroll([np.zeros((2, 2))], [])


# --- models ---

class TestModels:
    @pytest.mark.parametrize("name", sorted(REFERENCE_PARAMETER_COUNTS))
    def test_parameter_count_near_reference(self, name):
        model = build_model(preset(name).model)
        reference = REFERENCE_PARAMETER_COUNTS[name]
        assert abs(model.parameter_count - reference) <= 0.25 * reference

    def test_parameter_table_totals(self):
        model = build_model(preset("copy-matntm").model)
        table = model.parameter_table()
        assert table["count"].sum() == model.parameter_count
        assert {"embed", "layer0", "layer1", "out", "read", "write"} <= set(table["layer"])

    def test_kind_selects_class(self, tiny_config):
        assert isinstance(build_model(tiny_config.model), MatNtmModel)
        assert type(matrix_rnn_baseline(tiny_config.model)) is MatrixRnnModel

    def test_zero_parameters_give_half(self, tiny_config, rng):
        model = build_model(tiny_config.model)
        sample = gen_copy_task(2, 1, 3, rng, length=3)
        outputs, _ = forward_sequence(model, sample.inputs, sample.target_len)
        assert len(outputs) == 3
        assert all(np.array_equal(o, np.full((2, 2), 0.5)) for o in outputs)

    def test_outputs_and_weights(self, tiny_config, rng):
        model = build_model(tiny_config.model, seeded_rng(3))
        sample = gen_copy_task(2, 1, 3, rng, length=3)
        outputs, diag = model.forward_sequence(sample.inputs, sample.target_len)
        assert all(np.all((o > 0) & (o < 1)) for o in outputs)
        steps = len(sample.inputs) + sample.target_len
        assert len(diag.read_weights) == len(diag.write_weights) == steps
        for w in diag.read_weights + diag.write_weights:
            assert w.sum() == pytest.approx(1.0, abs=1e-9)
        frame = diag.weight_frame()
        assert len(frame) == 2 * steps * tiny_config.model.slots

    def test_deterministic(self, tiny_config, rng):
        sample = gen_copy_task(2, 1, 3, rng, length=2)
        a, _ = build_model(tiny_config.model, seeded_rng(9)).forward_sequence(sample.inputs, 2)
        b, _ = build_model(tiny_config.model, seeded_rng(9)).forward_sequence(sample.inputs, 2)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_controller_step_shapes(self, tiny_config):
        c = tiny_config.model
        model = build_model(c, seeded_rng(4))
        states, heads, logits = controller_step(
            model, np.zeros((c.token, c.token)), np.zeros((c.slot_size, c.slot_size)), model.initial_state()
        )
        assert [s.shape for s in states] == [(c.hidden, c.hidden)] * c.layers
        assert logits.shape == (c.content, c.content)
        assert heads["write"]["s"].sum() == pytest.approx(1.0)
        assert heads["read"]["gamma"].reshape(-1)[0] >= 1.0
        packed = model.head_states(heads, {"read": np.full(c.slots, 1 / c.slots), "write": np.full(c.slots, 1 / c.slots)})
        assert packed["write"].erase is not None
        assert packed["read"].erase is None

    def test_bad_token_shape(self, tiny_config):
        model = build_model(tiny_config.model)
        with pytest.raises(ShapeMismatch):
            model.forward_sequence([np.zeros((2, 2))], 1)

    def test_bad_parameter_shape(self, tiny_config):
        params = build_model(tiny_config.model).params
        params["out.B"] = np.zeros((5, 5))
        with pytest.raises(ShapeMismatch):
            MatNtmModel(tiny_config.model, params)


# --- gradients through the full unroll ---

class TestGradients:
    def _check(self, config, steps, seed):
        rng = seeded_rng(seed)
        model = build_model(config.model, rng)
        sample = gen_copy_task(config.model.content, 1, 10, rng, length=steps)

        def builder(tape, refs):
            return model.sequence_loss(tape, refs, sample)

        return grad_check(builder, model.params, n_coords=60, rng=rng)

    def test_single_step(self, tiny_config):
        assert self._check(tiny_config, 1, 0) <= 1e-5

    def test_four_steps(self, tiny_config):
        assert self._check(tiny_config, 4, 1) <= 1e-4

    def test_matrix_rnn(self, tiny_config):
        config = tiny_config.model_copy(update={"model": tiny_config.model.model_copy(update={"kind": "matrnn"})})
        assert self._check(config, 2, 2) <= 1e-5
