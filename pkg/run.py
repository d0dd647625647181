#!/usr/bin/env python3
"""
Command-line entry point for the resonator analysis toolkit
Synthesizes traces, fits scans, extracts kinetic inductance and assembles Q_i sweeps
"""

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis.cpw_line import extract_lki, fit_device_lki, ki_curve, line_params, quarter_wave_freq
from analysis.delay_fit import correct, fit_delay
from analysis.fit_engine import fit_pipeline, phase_curves
from analysis.notch_model import synth_trace
from analysis.tls_sweep import aggregate, classify_regimes, compare_surfaces, fit_tls_law
from config import AnalysisSettings, get_config, load_settings, TOOL_NAME, TOOL_VERSION
from models.cpw import CpwGeometry
from models.fit import FitConfig, ResonatorFit
from models.notch import NoiseSpec, NotchParams
from models.trace import Band, TraceMeta
from storage.reference_tones import GEOMETRIC_INDUCTANCE, ReferenceTones
from storage.result_files import (ResultFileManager, comparison_record, delay_fit_record,
                                  device_ki_record, ki_result_record, line_params_record,
                                  regime_record, resonator_fit_from_record, resonator_fit_record,
                                  surface_from_record, surface_record, tls_fit_record)
from storage.staging import OutputStage
from storage.trace_files import COLUMNS, SIDECAR_SUFFIX, TraceFileManager
from utils.errors import (DataError, NonConvergenceError, NumericalError, PreconditionError,
                          ResonatorAnalysisError, SchemaError, UsageError)
from utils.formatting import format_ghz, quantity
from utils.responses import error_record

logger = logging.getLogger('resonator_cli')

TABLE_FLOAT_FORMAT = '%.10g'


class _ArgumentParser(argparse.ArgumentParser):
    """Reports usage problems as toolkit errors instead of exiting"""

    def error(self, message):
        raise UsageError(message, {'usage': self.format_usage().strip()})


class ResonatorCli:
    """One method per subcommand; every output goes through a staged commit"""

    def __init__(self, settings: AnalysisSettings):
        self.settings = settings
        self.traces = TraceFileManager()
        self.results = ResultFileManager()

    @property
    def timestamp(self) -> bool:
        return not self.settings.suppress_timestamp

    def _document(self, records, inputs: Sequence[str] = ()):
        return self.results.build(records, inputs=inputs, config=self.settings.to_dict(),
                                  timestamp=self.timestamp)

    @staticmethod
    def _write_table(frame: pd.DataFrame, path: str):
        frame.to_csv(path, index=False, float_format=TABLE_FLOAT_FORMAT, lineterminator='\n')
        logger.info(f"Wrote {len(frame)} table rows to {os.path.basename(path)}")

    # synth

    def synth(self, args) -> int:
        params = NotchParams(f0=args.f0, q_total=args.q, q_c=args.qc,
                             delta_omega=args.delta_omega, phi0=args.phi0,
                             delay=args.delay, amp=args.amp)
        meta = TraceMeta(device_id=args.device, resonator_index=args.resonator,
                         power_dbm=args.power, temperature_mk=args.temperature)

        narrow_band = Band(center=params.f0, span=self.settings.narrow_linewidths * params.linewidth)
        wide_band = narrow_band.scaled(self.settings.wide_factor)

        # Independent noise draws for the two scans
        wide = synth_trace(params, wide_band, self.settings.wide_points,
                           NoiseSpec(args.sigma, args.seed), meta.with_scan_kind('wide'))
        narrow = synth_trace(params, narrow_band, self.settings.narrow_points,
                             NoiseSpec(args.sigma, args.seed + 1), meta.with_scan_kind('narrow'))

        wide_path = os.path.join(args.out_dir, f"{args.prefix}_wide.csv")
        narrow_path = os.path.join(args.out_dir, f"{args.prefix}_narrow.csv")
        with OutputStage() as stage:
            self.traces.write(wide, stage.path_for(wide_path), args.format)
            self.traces.write(narrow, stage.path_for(narrow_path), args.format)

        print(f"{params}  ->  {wide_path}, {narrow_path}")
        return 0

    # delay

    def delay(self, args) -> int:
        wide = self.traces.parse(args.wide)
        inputs = [args.wide]
        if args.narrow:
            narrow_band = self.traces.parse(args.narrow).band
            inputs.append(args.narrow)
        elif args.narrow_center is not None and args.narrow_span is not None:
            narrow_band = Band(center=args.narrow_center, span=args.narrow_span)
        else:
            raise UsageError("delay needs --narrow or both --narrow-center and --narrow-span")

        order = args.background_order or self.settings.delay_background_order
        result = fit_delay(wide, narrow_band, background_order=order,
                           exclusion_factor=self.settings.exclusion_factor)

        document = self._document([delay_fit_record(result)], inputs)
        with OutputStage() as stage:
            self.results.write(document, stage.path_for(args.out))

        print(f"tau = {result.tau * 1e9:.6f} ns, intercept = {result.phase_intercept:.6f} rad, "
              f"rms = {result.rms_residual:.3g} rad over {result.n_used} samples")
        return 0

    # fit

    def fit(self, args) -> int:
        wide = self.traces.parse(args.wide)
        narrow = self.traces.parse(args.narrow)
        order = args.background_order or self.settings.delay_background_order

        pipeline = fit_pipeline(wide, narrow, FitConfig.from_settings(self.settings),
                                background_order=order,
                                exclusion_factor=self.settings.exclusion_factor,
                                max_passes=self.settings.delay_refinement_passes)
        fit = pipeline.fit
        if not fit.converged and not args.allow_unconverged:
            raise NonConvergenceError(f"Phase fit did not converge: {fit.message}",
                                      {'summary': fit.summary()})

        document = self._document([delay_fit_record(pipeline.delay), resonator_fit_record(fit)],
                                  [args.wide, args.narrow])
        with OutputStage() as stage:
            self.results.write(document, stage.path_for(args.out))
            if args.table:
                self._write_table(self.fit_table(narrow, pipeline), stage.path_for(args.table))

        print(fit.summary())
        print(f"tau = {pipeline.delay.tau * 1e9:.6f} ns after {pipeline.delay_passes} passes, "
              f"extrapolation rms {pipeline.extrapolation_rms:.3g} rad")
        return 0

    @staticmethod
    def fit_table(narrow, pipeline) -> pd.DataFrame:
        """Frequency, data phase, model phase and residual of the corrected narrow scan"""
        corrected = correct(narrow, pipeline.delay)
        data, model = phase_curves(corrected, pipeline.fit)
        return pd.DataFrame({'freq_hz': corrected.freq, 'data_phase_rad': data,
                             'model_phase_rad': model, 'residual_rad': data - model})

    # cpw

    def cpw(self, args) -> int:
        geometry = CpwGeometry(center_width=args.width, gap=args.gap,
                               substrate_eps_r=args.eps_r, tan_delta=args.tan_delta)
        line = line_params(geometry)
        record = line_params_record(line, geometry)
        if args.length is not None:
            f_quarter = quarter_wave_freq(line, args.length, args.l_ki)
            record['quarter_wave'] = {'length': quantity(args.length, 'm'),
                                      'l_ki': quantity(args.l_ki, 'H/m'),
                                      'frequency': quantity(f_quarter, 'Hz')}

        document = self._document([record])
        with OutputStage() as stage:
            self.results.write(document, stage.path_for(args.out))

        print(line)
        if args.length is not None:
            print(f"quarter-wave tone {format_ghz(f_quarter)} GHz")
        return 0

    # ki

    def _ki_tones(self, args):
        """(device, position, f_meas, f_model) rows from the reference set or a table"""
        if args.device:
            tones = ReferenceTones().tones(args.device)
            return [(t.device_id, t.position, t.f_meas, t.f_model) for t in tones], []

        try:
            frame = pd.read_csv(args.tones_table)
        except FileNotFoundError:
            raise SchemaError(f"Tone table not found: {args.tones_table}")
        except (pd.errors.EmptyDataError, pd.errors.ParserError) as e:
            raise SchemaError(f"Tone table {args.tones_table} cannot be parsed: {e}")
        missing = {'f_meas_hz', 'f_model_hz'} - set(frame.columns)
        if missing:
            raise SchemaError(f"{args.tones_table} lacks columns: {', '.join(sorted(missing))}")
        rows = []
        # line 1 is the header
        for line, row in enumerate(frame.to_dict('records'), start=2):
            device = str(row['device']) if 'device' in frame.columns else None
            try:
                position = int(row['position']) if 'position' in frame.columns else line - 1
                rows.append((device, position, float(row['f_meas_hz']), float(row['f_model_hz'])))
            except (TypeError, ValueError) as e:
                raise SchemaError(f"{args.tones_table}: {e}", line=line)
        return rows, [args.tones_table]

    def ki(self, args) -> int:
        tones, inputs = self._ki_tones(args)
        if not tones:
            raise PreconditionError("No tones to analyse")

        records = []
        for device, position, f_meas, f_model in tones:
            result = extract_lki(f_meas, f_model, args.l_geom)
            records.append(ki_result_record(result, device, position))
            print(f"{device or '-'} pos {position}: {format_ghz(f_meas)} GHz -> "
                  f"L_ki = {result.l_ki * 1e9:.2f} nH/m")

        by_device: Dict[Optional[str], List[Tuple[float, float]]] = {}
        for device, _, f_meas, f_model in tones:
            by_device.setdefault(device, []).append((f_meas, f_model))
        for device, pairs in by_device.items():
            device_fit = fit_device_lki(pairs, args.l_geom, device_id=device)
            records.append(device_ki_record(device_fit))
            print(f"{device or '-'} device L_ki = {device_fit.l_ki * 1e9:.2f} nH/m, "
                  f"rms residual {device_fit.rms_residual / 1e6:.3f} MHz")

        document = self._document(records, inputs)
        with OutputStage() as stage:
            self.results.write(document, stage.path_for(args.out))
            if args.curve_table:
                table = self.ki_table(tones, args.l_geom, args.curve_max, args.curve_points)
                self._write_table(table, stage.path_for(args.curve_table))
        return 0

    @staticmethod
    def ki_table(tones, l_geom: float, curve_max: float, curve_points: int) -> pd.DataFrame:
        """Predicted resonance of every design position over a kinetic-inductance grid"""
        grid = np.linspace(0.0, curve_max, curve_points)
        columns = {'l_ki_nh_per_m': grid * 1e9}
        for _, position, _, f_model in sorted(tones, key=lambda t: t[1]):
            columns.setdefault(f"f0_pos{position}_ghz", ki_curve(f_model, l_geom, grid) / 1e9)
        return pd.DataFrame(columns)

    # sweep

    def _read_fits(self, path: str) -> List[ResonatorFit]:
        document = self.results.read(path)
        return [resonator_fit_from_record(r)
                for r in ResultFileManager.records_of(document, 'ResonatorFit')]

    def sweep(self, args) -> int:
        paths = sorted(path for path in glob.glob(os.path.join(args.directory, '*.json'))
                       if not path.endswith(SIDECAR_SUFFIX))
        if not paths:
            raise PreconditionError(f"No result files in {args.directory}")

        # map keeps the sorted input order whatever order the workers finish in
        with ThreadPoolExecutor(max_workers=self.settings.sweep_workers) as pool:
            per_file = list(pool.map(self._read_fits, paths))
        fits = [fit for fits in per_file for fit in fits]
        if not fits:
            raise PreconditionError(f"No resonator fits in {args.directory}")
        logger.info(f"Read {len(fits)} fits from {len(paths)} result files")

        surface = aggregate(fits)
        report = classify_regimes(surface, eps_sat=self.settings.eps_sat,
                                  eps_dep=self.settings.eps_dep,
                                  plateau_tolerance=self.settings.plateau_tolerance)
        surface = surface.with_regimes(report.row_labels)
        records = [surface_record(surface), regime_record(report)]

        n_temperatures, n_powers = surface.shape
        if n_temperatures >= 3 and n_powers >= 3:
            records.append(tls_fit_record(fit_tls_law(surface, exponent=self.settings.tls_exponent)))
        else:
            logger.info(f"Skipping the TLS law fit on a {n_temperatures}x{n_powers} grid")

        document = self._document(records, paths)
        with OutputStage() as stage:
            self.results.write(document, stage.path_for(args.out))
            if args.table:
                self._write_table(self.sweep_table(surface), stage.path_for(args.table))

        for temperature, label, spread in zip(surface.temperatures, report.row_labels, report.spread):
            print(f"{temperature:10.1f} mK  {label:16s}  spread {spread:.3f}")
        return 0

    @staticmethod
    def sweep_table(surface) -> pd.DataFrame:
        """One row per temperature; Q_i and sigma per power plus the row regime"""
        columns = {'temperature_mk': surface.temperatures}
        for j, power in enumerate(surface.powers):
            columns[f"qi_{power:g}dbm"] = surface.q_i[:, j]
            columns[f"sigma_{power:g}dbm"] = surface.sigma[:, j]
        columns['regime'] = surface.regime[:, 0]
        return pd.DataFrame(columns)

    # report

    def _read_surface(self, path: str):
        surfaces = ResultFileManager.records_of(self.results.read(path), 'QiSurface')
        if not surfaces:
            raise SchemaError(f"{path} holds no QiSurface record")
        return surface_from_record(surfaces[0])

    def report(self, args) -> int:
        label_a, label_b = args.labels or [os.path.splitext(os.path.basename(p))[0]
                                           for p in (args.a, args.b)]
        comparison = compare_surfaces(self._read_surface(args.a), self._read_surface(args.b),
                                      label_a, label_b)

        document = self._document([comparison_record(comparison)], [args.a, args.b])
        with OutputStage() as stage:
            self.results.write(document, stage.path_for(args.out))
            if args.table:
                self._write_table(self.report_table(comparison), stage.path_for(args.table))

        print(f"{len(comparison.cells)} common cells, median Q_i ratio "
              f"{label_b}/{label_a} = {comparison.median_ratio:.3f}")
        return 0

    @staticmethod
    def report_table(comparison) -> pd.DataFrame:
        frame = pd.DataFrame(comparison.cells)
        return frame.rename(columns={'q_i_a': f"qi_{comparison.label_a}",
                                     'q_i_b': f"qi_{comparison.label_b}"})

    # serve

    def serve(self, args) -> int:
        from app import app
        logger.info(f"Serving {TOOL_NAME} {TOOL_VERSION} on {args.host}:{args.port}")
        app.run(host=args.host, port=args.port, debug=False)
        return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog='run.py', description='Superconducting resonator analysis')
    parser.add_argument('--config', help='JSON file overriding analysis settings')
    parser.add_argument('--no-timestamp', action='store_true',
                        help='omit generated_at so identical runs give identical files')
    parser.add_argument('--version', action='version', version=f"{TOOL_NAME} {TOOL_VERSION}")
    commands = parser.add_subparsers(dest='command', metavar='command', required=True)

    synth = commands.add_parser('synth', help='synthesize a wide/narrow scan pair')
    synth.add_argument('--f0', type=float, required=True, help='resonance frequency (Hz)')
    synth.add_argument('--q', type=float, required=True, help='total quality factor')
    synth.add_argument('--qc', type=float, required=True, help='coupling quality factor')
    synth.add_argument('--delta-omega', type=float, default=0.0, help='asymmetry (Hz)')
    synth.add_argument('--phi0', type=float, default=0.0, help='phase offset (rad)')
    synth.add_argument('--delay', type=float, default=0.0, help='electrical delay (s)')
    synth.add_argument('--amp', type=float, default=1.0)
    synth.add_argument('--sigma', type=float, default=0.0, help='noise per quadrature')
    synth.add_argument('--seed', type=int, default=0)
    synth.add_argument('--device', default='synthetic')
    synth.add_argument('--resonator', type=int, default=1)
    synth.add_argument('--power', type=float, help='readout power (dBm)')
    synth.add_argument('--temperature', type=float, help='temperature (mK)')
    synth.add_argument('--format', choices=sorted(COLUMNS), default='reim')
    synth.add_argument('--out-dir', default='.')
    synth.add_argument('--prefix', default='trace')
    synth.set_defaults(handler=ResonatorCli.synth)

    delay = commands.add_parser('delay', help='fit the electrical delay of a wide scan')
    delay.add_argument('--wide', required=True)
    delay.add_argument('--narrow', help='narrow trace whose band is excluded')
    delay.add_argument('--narrow-center', type=float, help='narrow band center (Hz)')
    delay.add_argument('--narrow-span', type=float, help='narrow band span (Hz)')
    delay.add_argument('--background-order', type=int, choices=(1, 2))
    delay.add_argument('--out', required=True)
    delay.set_defaults(handler=ResonatorCli.delay)

    fit = commands.add_parser('fit', help='fit a wide/narrow scan pair')
    fit.add_argument('--wide', required=True)
    fit.add_argument('--narrow', required=True)
    fit.add_argument('--background-order', type=int, choices=(1, 2))
    fit.add_argument('--allow-unconverged', action='store_true',
                     help='write results even when the phase fit did not converge')
    fit.add_argument('--out', required=True)
    fit.add_argument('--table', help='phase table (CSV)')
    fit.set_defaults(handler=ResonatorCli.fit)

    cpw = commands.add_parser('cpw', help='CPW line parameters from geometry')
    cpw.add_argument('--width', type=float, required=True, help='center width (m)')
    cpw.add_argument('--gap', type=float, required=True, help='gap (m)')
    cpw.add_argument('--eps-r', type=float, default=11.7)
    cpw.add_argument('--tan-delta', type=float, default=0.0)
    cpw.add_argument('--length', type=float, help='resonator length (m)')
    cpw.add_argument('--l-ki', type=float, default=0.0, help='kinetic inductance (H/m)')
    cpw.add_argument('--out', required=True)
    cpw.set_defaults(handler=ResonatorCli.cpw)

    ki = commands.add_parser('ki', help='kinetic inductance from measured and model tones')
    source = ki.add_mutually_exclusive_group(required=True)
    source.add_argument('--table', dest='tones_table', metavar='TABLE',
                        help='CSV with f_meas_hz, f_model_hz[, device, position]')
    source.add_argument('--device', help='use the reference tones of this device')
    ki.add_argument('--l-geom', type=float, default=GEOMETRIC_INDUCTANCE,
                    help='geometric inductance (H/m)')
    ki.add_argument('--curve-max', type=float, default=1e-6, help='largest L_ki on the curve (H/m)')
    ki.add_argument('--curve-points', type=int, default=101)
    ki.add_argument('--out', required=True)
    ki.add_argument('--curve-table', help='L_ki vs f0 curve table (CSV)')
    ki.set_defaults(handler=ResonatorCli.ki)

    sweep = commands.add_parser('sweep', help='assemble fit results into a Q_i surface')
    sweep.add_argument('directory')
    sweep.add_argument('--out', required=True)
    sweep.add_argument('--table', help='Q_i vs temperature table (CSV)')
    sweep.set_defaults(handler=ResonatorCli.sweep)

    report = commands.add_parser('report', help='compare two sweep outputs')
    report.add_argument('a')
    report.add_argument('b')
    report.add_argument('--labels', nargs=2, metavar=('A', 'B'))
    report.add_argument('--out', required=True)
    report.add_argument('--table', help='comparison table (CSV)')
    report.set_defaults(handler=ResonatorCli.report)

    serve = commands.add_parser('serve', help='run the HTTP API')
    serve.add_argument('--host', default='127.0.0.1')
    serve.add_argument('--port', type=int, default=5000)
    serve.set_defaults(handler=ResonatorCli.serve)

    return parser


def _emit_error(error: Exception, timestamp: bool):
    print(json.dumps(error_record(error, timestamp=timestamp), sort_keys=True), file=sys.stderr)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        _emit_error(e, timestamp=True)
        return e.exit_code
    except SystemExit as e:
        # --help and --version
        return e.code or 0

    get_config().setup_logging()
    timestamp = not args.no_timestamp
    try:
        settings = load_settings(args.config)
        if args.no_timestamp:
            settings = settings.with_overrides({'suppress_timestamp': True})
        timestamp = not settings.suppress_timestamp
        return args.handler(ResonatorCli(settings), args)
    except ResonatorAnalysisError as e:
        logger.error(f"{args.command} failed: {e}")
        _emit_error(e, timestamp)
        return e.exit_code
    except (np.linalg.LinAlgError, FloatingPointError) as e:
        error = NumericalError(str(e), {'exception': e.__class__.__name__})
        logger.error(f"{args.command} failed: {error}")
        _emit_error(error, timestamp)
        return error.exit_code
    except (ValueError, KeyError, TypeError, OSError) as e:
        # pandas parser errors derive from ValueError
        error = DataError(str(e), {'exception': e.__class__.__name__})
        logger.error(f"{args.command} failed: {error}")
        _emit_error(error, timestamp)
        return error.exit_code
    except Exception as e:
        logger.exception(f"{args.command} failed unexpectedly")
        _emit_error(e, timestamp)
        return 1


if __name__ == '__main__':
    sys.exit(main())
