"""
Integration Tests for CLI Interface

Runs every subcommand through main.main() on small configs and checks the
written result files, the exit codes and byte-identical reruns.
"""

import json
import os
import sys
from unittest.mock import patch

import pytest
import yaml

# Add parent directory to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

import main


def write_config(tmp_path, data, name='config.yaml'):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data), encoding='utf-8')
    return str(path)


def read_result(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


@pytest.mark.cli
@pytest.mark.integration
class TestCLIInterface:
    """Argument handling and exit codes."""

    def test_no_command_prints_help(self, capsys):
        assert main.main([]) == main.EXIT_ERROR
        assert 'decay' in capsys.readouterr().out

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main.main(['--version'])
        assert exc.value.code == 0
        assert capsys.readouterr().out.startswith('curvdecay ')

    def test_invalid_thread_hint(self, tmp_path):
        assert main.main(['decay', '--threads', '0', '--out', str(tmp_path)]) == main.EXIT_SCHEMA

    def test_missing_config_file(self, tmp_path):
        code = main.main(['decay', '--config', str(tmp_path / 'absent.yaml'), '--out', str(tmp_path)])
        assert code == main.EXIT_SCHEMA

    def test_unparseable_yaml(self, tmp_path):
        path = tmp_path / 'broken.yaml'
        path.write_text("m: [1, 2\n", encoding='utf-8')
        assert main.main(['decay', '--config', str(path), '--out', str(tmp_path)]) == main.EXIT_SCHEMA

    def test_mistyped_field(self, tmp_path, capsys):
        config = write_config(tmp_path, {'m': 'three'})
        assert main.main(['decay', '--config', config, '--out', str(tmp_path)]) == main.EXIT_SCHEMA
        assert "Field 'm' must be int" in capsys.readouterr().out

    def test_negative_seed(self, tmp_path):
        assert main.main(['nerve', '--seed', '-1', '--out', str(tmp_path)]) == main.EXIT_SCHEMA


@pytest.mark.cli
@pytest.mark.integration
class TestExperimentCommands:
    """End-to-end runs of each subcommand."""

    def test_decay_writes_result_and_sweep(self, tmp_path):
        out = tmp_path / 'decay'
        assert main.main(['decay', '--out', str(out)]) == main.EXIT_OK
        document = read_result(out / 'F.json')
        assert document['command'] == 'decay'
        assert document['result']['fit']['slope'] == pytest.approx(2.0, abs=0.05)
        assert document['result']['monotone']['is_monotone']
        assert document['audit']['transformation_count'] == 2
        header = (out / 'sweep.csv').read_text(encoding='utf-8').splitlines()[0]
        assert header == 'r,G,F'

    def test_decay_reruns_are_byte_identical(self, tmp_path):
        first, second = tmp_path / 'a', tmp_path / 'b'
        assert main.main(['decay', '--out', str(first)]) == main.EXIT_OK
        assert main.main(['decay', '--out', str(second)]) == main.EXIT_OK
        for name in ('F.json', 'sweep.csv'):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_config_file_overrides_defaults(self, tmp_path):
        config = write_config(tmp_path, {'m': 1, 'sweep': {'start': 10.0, 'stop': 1000.0, 'num': 5}})
        out = tmp_path / 'decay'
        assert main.main(['decay', '--config', config, '--out', str(out)]) == main.EXIT_OK
        document = read_result(out / 'F.json')
        assert document['config']['m'] == 1
        assert len((out / 'sweep.csv').read_text(encoding='utf-8').splitlines()) == 6

    def test_nerve(self, tmp_path):
        out = tmp_path / 'nerve'
        assert main.main(['nerve', '--out', str(out)]) == main.EXIT_OK
        nerve = read_result(out / 'nerve.json')['result']
        assert nerve['dimension'] == 1
        assert nerve['lebesgue_number'] >= 1.0 - 1e-9
        report = read_result(out / 'lipschitz_report.json')['result']
        assert report['verdict'] in ('PASS', 'FAIL')
        assert report['lipschitz']['measured'] >= 0.0

    def test_warped_flat_profile(self, tmp_path):
        config = write_config(tmp_path, {'profile': 'flat', 'net_horizon': 100.0, 'sweep_points': 101})
        out = tmp_path / 'warped'
        assert main.main(['warped', '--config', config, '--out', str(out)]) == main.EXIT_OK
        assert read_result(out / 'cover_verdict.json')['result']['verdict'] == 'PASS'
        assert read_result(out / 'net_verdict.json')['result']['verdict'] == 'PASS'
        profile = read_result(out / 'profile.json')['result']
        assert profile['k_inf_at_cover_radius'] == pytest.approx(0.0, abs=1e-12)
        rows = (out / 'curvature.csv').read_text(encoding='utf-8').splitlines()
        assert rows[0] == 't,phi,dphi,d2phi,k'
        assert len(rows) == 102

    def test_warped_small_cover_radius(self, tmp_path):
        config = write_config(tmp_path, {'profile': 'flat', 'cover_radius': 5.0,
                                         'net_horizon': 100.0, 'sweep_points': 101})
        code = main.main(['warped', '--config', config, '--out', str(tmp_path / 'w')])
        assert code == main.EXIT_PRECONDITION

    def test_fivelemma(self, tmp_path):
        config = write_config(tmp_path, {'random_systems': 10})
        out = tmp_path / 'fivelemma'
        assert main.main(['fivelemma', '--config', config, '--out', str(out)]) == main.EXIT_OK
        result = read_result(out / 'pair.json')['result']
        assert result['brute_force']['verdict'] == 'PASS'
        assert result['brute_force']['systems'] == 10
        assert result['monotone']['is_monotone']

    def test_homotopy(self, tmp_path):
        config = write_config(tmp_path, {'instances': 1, 'loops': 2})
        out = tmp_path / 'homotopy'
        assert main.main(['homotopy', '--config', config, '--out', str(out)]) == main.EXIT_OK
        result = read_result(out / 'constants_report.json')['result']
        assert result['summary']['verdict'] == 'PASS', result['summary']['failed']
        assert [loop['winding'] for loop in result['loops']] == [-2, -1]
        assert all(loop['index'] == loop['winding'] for loop in result['loops'])

    def test_homotopy_rejects_scalars(self, tmp_path):
        config = write_config(tmp_path, {'matrix_size': 1})
        assert main.main(['homotopy', '--config', config, '--out', str(tmp_path)]) == main.EXIT_SCHEMA

    def test_pairing_unknown_projection(self, tmp_path):
        config = write_config(tmp_path, {'projection': {'kind': 'spiral'}})
        assert main.main(['pairing', '--config', config, '--out', str(tmp_path)]) == main.EXIT_SCHEMA

    def test_pairing_defect_too_large(self, tmp_path, capsys):
        trend = {'rows': [{'t': 1.0, 'defect': 0.5}], 'lambda1': 1.0, 'lambda2': 1.0,
                 'lambda3': 1.0, 'defect_times_t_ratio': 1.0}
        with patch('modules.matrix_ktheory.pipeline_trend', return_value=trend), \
                patch('modules.matrix_ktheory.twisted_defect', return_value=0.5):
            code = main.main(['pairing', '--out', str(tmp_path)])
        assert code == main.EXIT_NOT_CONVERGED
        assert 'NOT_CONVERGED' in capsys.readouterr().out

    def test_pairing_disagreeing_with_chern_is_not_converged(self, tmp_path, capsys):
        trend = {'rows': [{'t': 1.0, 'defect': 0.1}], 'lambda1': 1.0, 'lambda2': 1.0,
                 'lambda3': 1.0, 'defect_times_t_ratio': 1.0}
        record = {'index': -1, 'defect_scale_t': 0.01}
        with patch('modules.matrix_ktheory.pipeline_trend', return_value=trend), \
                patch('modules.matrix_ktheory.pairing_record', return_value=record):
            code = main.main(['pairing', '--out', str(tmp_path)])
        assert code == main.EXIT_NOT_CONVERGED
        assert 'Chern' in capsys.readouterr().out
        assert not (tmp_path / 'results.json').exists()

    @pytest.mark.slow
    def test_pairing_bott_projection(self, tmp_path):
        out = tmp_path / 'pairing'
        assert main.main(['pairing', '--out', str(out)]) == main.EXIT_OK
        result = read_result(out / 'results.json')['result']
        assert result['pairing'] == result['chern_oracle'] == 1
        assert [row['index'] for row in result['ladder']] == [1, 1, 1]
