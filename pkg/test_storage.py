"""
Tests for trace files, result documents, staged outputs and the reference tone tables
"""

import hashlib
import math
import os

import numpy as np
import pytest

from models.fit import DelayFit, Estimate, ResonatorFit
from models.sweep import QiSurface
from models.trace import Band, Trace, TraceMeta
from storage.reference_tones import ReferenceTones
from storage.result_files import (ResultFileManager, delay_fit_record, resonator_fit_from_record,
                                  resonator_fit_record, surface_from_record, surface_record)
from storage.staging import OutputStage
from storage.trace_files import TraceFileManager, parse_trace, sidecar_path, write_trace
from utils.errors import (NonFiniteValueError, NonMonotoneFrequencyError, PreconditionError,
                          SchemaError)


@pytest.fixture
def manager():
    return TraceFileManager()


def sample_trace(meta=None):
    freq = np.linspace(4.49e9, 4.495e9, 64)
    s21 = 0.8 * np.exp(1j * np.linspace(-2.5, 2.5, 64)) + 0.01j
    return Trace(freq, s21, meta or TraceMeta(device_id='C', resonator_index=4, power_dbm=-60.0,
                                              temperature_mk=25.0, scan_kind='narrow'))


def write_raw(path, body, fmt='reim'):
    header = '# resonator-trace 1\n# format: %s\n' % fmt
    path.write_text(header + body)
    return str(path)


def reim_rows(n=8, start=4.0e9):
    return 'freq_hz,re,im\n' + ''.join(f'{start + i * 1e6:.1f},1.0,0.0\n' for i in range(n))


class TestTraceFiles:

    def test_reim_round_trip_is_exact(self, manager, tmp_path):
        trace = sample_trace()
        path = str(tmp_path / 'trace.csv')
        written = manager.write(trace, path, 'reim')
        assert written == [path, sidecar_path(path)]

        parsed = manager.parse(path)
        np.testing.assert_array_equal(parsed.freq, trace.freq)
        np.testing.assert_array_equal(parsed.s21, trace.s21)
        assert parsed.meta == trace.meta

    def test_dbdeg_round_trip(self, manager, tmp_path):
        trace = sample_trace()
        path = str(tmp_path / 'trace.csv')
        manager.write(trace, path, 'dbdeg')
        parsed = manager.parse(path)
        np.testing.assert_allclose(parsed.s21, trace.s21, rtol=1e-12)

    def test_module_helpers(self, tmp_path):
        trace = sample_trace()
        path = str(tmp_path / 'trace.csv')
        write_trace(trace, path)
        np.testing.assert_array_equal(parse_trace(path).s21, trace.s21)

    def test_zero_db_zero_degrees_is_unity(self, manager, tmp_path):
        body = 'freq_hz,mag_db,phase_deg\n' + ''.join(f'{4e9 + i * 1e6:.1f},0,0\n' for i in range(8))
        parsed = manager.parse(write_raw(tmp_path / 't.csv', body, 'dbdeg'))
        np.testing.assert_array_equal(parsed.s21, np.ones(8, dtype=complex))

    def test_missing_sidecar_uses_defaults(self, manager, tmp_path):
        parsed = manager.parse(write_raw(tmp_path / 't.csv', reim_rows()))
        assert parsed.meta == TraceMeta()

    def test_repeated_frequency_names_its_line(self, manager, tmp_path):
        lines = reim_rows().splitlines()
        lines[4] = lines[3]
        with pytest.raises(NonMonotoneFrequencyError) as excinfo:
            manager.parse(write_raw(tmp_path / 't.csv', '\n'.join(lines) + '\n'))
        assert excinfo.value.line == 7
        assert excinfo.value.column == 'freq_hz'

    def test_non_finite_value(self, manager, tmp_path):
        body = reim_rows().replace('4002000000.0,1.0,0.0', '4002000000.0,nan,0.0')
        with pytest.raises(NonFiniteValueError) as excinfo:
            manager.parse(write_raw(tmp_path / 't.csv', body))
        assert excinfo.value.line == 6
        assert excinfo.value.column == 're'

    def test_unparsable_value(self, manager, tmp_path):
        body = reim_rows().replace('4001000000.0,1.0,0.0', '4001000000.0,1.0,oops')
        with pytest.raises(SchemaError) as excinfo:
            manager.parse(write_raw(tmp_path / 't.csv', body))
        assert excinfo.value.column == 'im'

    @pytest.mark.parametrize('text', [
        'freq_hz,re,im\n4e9,1,0\n',
        '# resonator-trace 2\n# format: reim\nfreq_hz,re,im\n',
        '# resonator-trace 1\n# format: polar\nfreq_hz,re,im\n',
        '# resonator-trace 1\n# format: reim\nfreq_hz,mag_db,phase_deg\n',
        '# resonator-trace 1\n# format: reim\nfreq_hz,re,im,extra\n',
    ])
    def test_malformed_headers(self, manager, tmp_path, text):
        path = tmp_path / 't.csv'
        path.write_text(text)
        with pytest.raises(SchemaError):
            manager.parse(str(path))

    def test_too_few_rows(self, manager, tmp_path):
        with pytest.raises(SchemaError):
            manager.parse(write_raw(tmp_path / 't.csv', reim_rows(n=5)))

    def test_missing_file(self, manager, tmp_path):
        with pytest.raises(SchemaError):
            manager.parse(str(tmp_path / 'absent.csv'))


class TestResultFiles:

    @staticmethod
    def delay():
        return DelayFit(tau=40e-9, phase_intercept=1.25, excluded_band=Band(center=3.88e9, span=1e5),
                        rms_residual=1e-3, n_used=850, reference_freq=3.88e9,
                        coefficients=(-2.5e-7, 0.1))

    @staticmethod
    def fit():
        covariance = np.diag([10.0, 1e2, 2e2, 1.0, 1e-3]) ** 2
        return ResonatorFit(f0=Estimate(3.88e9, 10.0), q_total=Estimate(3e5, 1e2),
                            q_c=Estimate(4e5, 2e2), delta_omega=Estimate(12.0, 1.0),
                            phi0=Estimate(-0.7, 1e-3), q_i=Estimate(1.2e6, 3e3),
                            rms_residual=1e-3, n_iterations=9, converged=True,
                            fit_band=Band(center=3.88e9, span=2.6e4),
                            meta=TraceMeta(device_id='C', resonator_index=3, scan_kind='narrow'),
                            covariance=covariance.tolist(), message='parameter step below tolerance')

    def test_document_round_trip(self, tmp_path):
        files = ResultFileManager()
        document = files.build([delay_fit_record(self.delay()), resonator_fit_record(self.fit())],
                               config={'narrow_points': 201}, timestamp=False)
        path = files.write(document, str(tmp_path / 'result.json'))

        loaded = files.read(path)
        assert loaded == document
        assert 'generated_at' not in loaded
        assert loaded['records'][0]['tau'] == {'value': 40e-9, 'unit': 's'}

        fit = resonator_fit_from_record(files.records_of(loaded, 'ResonatorFit')[0])
        assert fit.f0 == self.fit().f0
        assert fit.q_i == self.fit().q_i
        assert fit.meta == self.fit().meta
        assert fit.covariance == self.fit().covariance

    def test_timestamp_is_optional(self):
        document = ResultFileManager().build([delay_fit_record(self.delay())])
        assert 'generated_at' in document

    def test_input_digests(self, tmp_path):
        source = tmp_path / 'wide.csv'
        source.write_bytes(b'# resonator-trace 1\n')
        document = ResultFileManager().build([], inputs=[str(source)], timestamp=False)
        entry = document['provenance']['inputs'][0]
        assert entry['sha256'] == hashlib.sha256(b'# resonator-trace 1\n').hexdigest()

    def test_bare_numbers_rejected(self):
        files = ResultFileManager()
        document = files.build([delay_fit_record(self.delay())], timestamp=False)
        document['records'][0]['tau'] = 40e-9
        with pytest.raises(SchemaError):
            files.validate(document)

    def test_unknown_record_type_rejected(self):
        with pytest.raises(SchemaError):
            ResultFileManager().build([{'type': 'Mystery'}], timestamp=False)

    def test_unreadable_documents(self, tmp_path):
        files = ResultFileManager()
        broken = tmp_path / 'broken.json'
        broken.write_text('{"schema_version": 1,')
        with pytest.raises(SchemaError):
            files.read(str(broken))
        with pytest.raises(SchemaError):
            files.read(str(tmp_path / 'absent.json'))

    def test_surface_with_absent_cells(self):
        q_i = np.array([[1e5, np.nan], [2e5, 3e5]])
        surface = QiSurface('C', 2, [25.0, 100.0], [-80.0, -60.0], q_i, frequency=4.744e9)
        record = surface_record(surface)
        assert record['q_i']['value'][0][1] is None

        ResultFileManager().validate({'schema_version': 1, 'tool': {}, 'records': [record],
                                      'provenance': {'inputs': [], 'config': {}}})
        rebuilt = surface_from_record(record)
        np.testing.assert_array_equal(rebuilt.q_i, surface.q_i)
        assert rebuilt.frequency == 4.744e9

    @pytest.mark.parametrize('model', [Estimate, DelayFit, ResonatorFit, QiSurface])
    def test_results_serialize_only_through_records(self, model):
        # result documents have one writer and one reader
        assert not hasattr(model, 'to_dict')
        assert not hasattr(model, 'from_dict')
        assert not hasattr(model, 'to_json')


class TestOutputStage:

    def test_commit_moves_files_into_place(self, tmp_path):
        target = tmp_path / 'out' / 'result.json'
        with OutputStage() as stage:
            staged = stage.path_for(str(target))
            with open(staged, 'w') as f:
                f.write('{}')
            with open(sidecar_path(staged), 'w') as f:
                f.write('{}')
            assert not target.exists()

        assert target.read_text() == '{}'
        assert os.path.exists(sidecar_path(str(target)))
        assert sorted(os.listdir(tmp_path / 'out')) == ['result.json', 'result.json.meta.json']

    def test_failure_leaves_nothing_behind(self, tmp_path):
        with pytest.raises(RuntimeError):
            with OutputStage() as stage:
                with open(stage.path_for(str(tmp_path / 'result.json')), 'w') as f:
                    f.write('{}')
                raise RuntimeError('analysis failed')
        assert os.listdir(tmp_path) == []


class TestReferenceTones:

    def test_design_positions(self):
        positions = ReferenceTones().positions()
        assert sorted(positions) == [1, 2, 3, 4]
        assert positions[2].coupling == 'capacitive'
        assert positions[2].f_model == pytest.approx(4.7440e9)
        assert positions[3].q_c_sim == pytest.approx(3.94e5)

    def test_measured_tones_keep_uncertainty(self):
        tones = ReferenceTones().tones('C')
        assert [t.position for t in tones] == [1, 2, 3, 4]
        assert tones[1].f_meas == pytest.approx(3.3167549e9, rel=1e-12)
        assert tones[1].sigma == pytest.approx(400.0, rel=1e-6)
        assert tones[1].f_model == pytest.approx(4.7440e9)

    def test_devices(self):
        assert ReferenceTones().devices() == ['A', 'B1', 'B2', 'B3', 'C', 'D', 'E']

    def test_unknown_device(self):
        with pytest.raises(PreconditionError):
            ReferenceTones().pairs('Z')

    def test_pairs(self):
        pairs = ReferenceTones().pairs('A')
        assert pairs[0] == pytest.approx((3.2927021e9, 4.7440e9))
        assert all(f_meas < f_model for f_meas, f_model in pairs)
        assert not math.isnan(pairs[-1][0])
