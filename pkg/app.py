"""
Resonator Analysis HTTP API
JSON endpoints for line parameters, kinetic inductance, linewidth Q_C and Q_i decomposition
"""

from flask import Flask, request
from flask_cors import CORS
from datetime import datetime, timezone
import logging

from analysis.cpw_line import extract_lki, fit_device_lki, line_params, quarter_wave_freq
from analysis.fit_engine import qi_from
from analysis.notch_model import qc_from_linewidth
from config import get_config, TOOL_NAME, TOOL_VERSION
from models.cpw import CpwGeometry
from models.fit import Estimate
from models.notch import NotchParams
from storage.reference_tones import GEOMETRIC_INDUCTANCE, ReferenceTones
from utils.errors import ResonatorAnalysisError
from utils.responses import APIResponse
from utils.validators import AnalysisValidator

config = get_config()

# Initialize Flask app
app = Flask(__name__)
app.config['MAX_CONTENT_LENGTH'] = config.MAX_CONTENT_LENGTH
CORS(app, origins=config.CORS_ORIGINS)

logger = logging.getLogger(__name__)

# Initialize services
validator = AnalysisValidator()
reference_tones = ReferenceTones()


@app.route('/health', methods=['GET'])
def health_check():
    """Health check endpoint"""
    return APIResponse.success({'status': 'healthy', 'tool': TOOL_NAME, 'version': TOOL_VERSION,
                                'timestamp': datetime.now(timezone.utc).isoformat()})


@app.route('/cpw/line-params', methods=['POST'])
def cpw_line_params():
    """Per-length parameters of a CPW geometry, optionally with its quarter-wave tone"""
    try:
        data = request.get_json(silent=True)

        validation_result = validator.validate_cpw_request(data)
        if not validation_result['valid']:
            return APIResponse.validation_error(validation_result['errors'])

        geometry = CpwGeometry.from_dict(data)
        line = line_params(geometry)
        result = line.to_dict()
        result['phase_velocity'] = line.phase_velocity

        if 'length' in data:
            result['quarter_wave_freq'] = quarter_wave_freq(line, float(data['length']),
                                                            float(data.get('l_ki', 0.0)))

        logger.info(f"Line parameters for w={geometry.center_width}, s={geometry.gap}: {line}")
        return APIResponse.success(result)

    except ResonatorAnalysisError as e:
        return APIResponse.from_exception(e)
    except Exception as e:
        logger.error(f"Error computing line parameters: {str(e)}")
        return APIResponse.internal_error("Failed to compute line parameters")


@app.route('/ki/extract', methods=['POST'])
def ki_extract():
    """Kinetic inductance from one measured/model tone pair"""
    try:
        data = request.get_json(silent=True)

        validation_result = validator.validate_ki_request(data)
        if not validation_result['valid']:
            return APIResponse.validation_error(validation_result['errors'])

        result = extract_lki(float(data['f_meas']), float(data['f_model']), float(data['l_geom']))
        return APIResponse.success(result.to_dict())

    except ResonatorAnalysisError as e:
        return APIResponse.from_exception(e)
    except Exception as e:
        logger.error(f"Error extracting kinetic inductance: {str(e)}")
        return APIResponse.internal_error("Failed to extract kinetic inductance")


@app.route('/ki/device-fit', methods=['POST'])
def ki_device_fit():
    """One kinetic inductance over a device's tones (explicit pairs or a reference device)"""
    try:
        data = request.get_json(silent=True) or {}

        if 'device' in data:
            data.setdefault('l_geom', GEOMETRIC_INDUCTANCE)
            data['pairs'] = [list(pair) for pair in reference_tones.pairs(str(data['device']))]

        validation_result = validator.validate_ki_request(data, require_pairs=True)
        if not validation_result['valid']:
            return APIResponse.validation_error(validation_result['errors'])

        fit = fit_device_lki([tuple(map(float, pair)) for pair in data['pairs']],
                             float(data['l_geom']), device_id=data.get('device'))
        result = fit.to_dict()
        result['predicted'] = fit.predicted()
        return APIResponse.success(result)

    except ResonatorAnalysisError as e:
        return APIResponse.from_exception(e)
    except Exception as e:
        logger.error(f"Error fitting device kinetic inductance: {str(e)}")
        return APIResponse.internal_error("Failed to fit device kinetic inductance")


@app.route('/notch/qc-from-linewidth', methods=['POST'])
def notch_qc_from_linewidth():
    """Coupling Q recovered from the dip linewidth of a lossless resonator"""
    try:
        data = request.get_json(silent=True)

        validation_result = validator.validate_qc_request(data)
        if not validation_result['valid']:
            return APIResponse.validation_error(validation_result['errors'])

        q_c = float(data['q_c'])
        params = NotchParams(f0=float(data['f0']), q_total=q_c, q_c=q_c,
                             delta_omega=float(data.get('delta_omega', 0.0)))
        result = qc_from_linewidth(params)
        return APIResponse.success(result.to_dict())

    except ResonatorAnalysisError as e:
        return APIResponse.from_exception(e)
    except Exception as e:
        logger.error(f"Error extracting linewidth Q_C: {str(e)}")
        return APIResponse.internal_error("Failed to extract Q_C")


@app.route('/qi', methods=['POST'])
def internal_q():
    """Internal Q from total and coupling Q, with optional uncertainties"""
    try:
        data = request.get_json(silent=True)

        validation_result = validator.validate_qi_request(data)
        if not validation_result['valid']:
            return APIResponse.validation_error(validation_result['errors'])

        result = qi_from(float(data['q_total']), float(data['q_c']),
                         data.get('sigma_q_total'), data.get('sigma_q_c'))
        if isinstance(result, Estimate):
            return APIResponse.success({'q_i': result.value, 'sigma': result.sigma})
        return APIResponse.success({'q_i': result})

    except ResonatorAnalysisError as e:
        return APIResponse.from_exception(e)
    except Exception as e:
        logger.error(f"Error computing Q_i: {str(e)}")
        return APIResponse.internal_error("Failed to compute Q_i")


@app.errorhandler(404)
def not_found(error):
    return APIResponse.not_found("Endpoint")


@app.errorhandler(405)
def method_not_allowed(error):
    return APIResponse.error("Method not allowed", 405, "METHOD_NOT_ALLOWED")


@app.errorhandler(500)
def internal_error(error):
    return APIResponse.internal_error()


if __name__ == '__main__':
    config.setup_logging()
    app.run(debug=config.DEBUG, host='127.0.0.1', port=5000)
