# apps/common/tests.py
import os

import pytest

from apps.common.exceptions import ConfigurationError
from apps.common.utils import atomic_write, format_key_values, parse_key_values
from apps.common.validators import parse_range, validate_power_of_two


class TestValidators:
    @pytest.mark.parametrize('value', [1, 2, 64, 256])
    def test_power_of_two(self, value):
        assert validate_power_of_two(value) == value

    @pytest.mark.parametrize('value', [0, 3, 48, -4])
    def test_not_power_of_two(self, value):
        with pytest.raises(ConfigurationError, match='input_size'):
            validate_power_of_two(value, name='input_size')

    def test_parse_range(self):
        assert parse_range('4, 5') == (4.0, 5.0)
        with pytest.raises(ConfigurationError):
            parse_range('5,4')


class TestAtomicWrite:
    def test_writes_through_suffixed_temp_file(self, tmp_path, settings, monkeypatch):
        settings.WHDSPOT_SETTINGS = {**settings.WHDSPOT_SETTINGS, 'ATOMIC_WRITE_SUFFIX': '.part'}
        sources = []
        real_replace = os.replace

        def recording_replace(src, dst):
            sources.append(str(src))
            real_replace(src, dst)

        monkeypatch.setattr(os, 'replace', recording_replace)
        path = atomic_write(tmp_path / 'out' / 'latest.ckpt', b'abc')
        assert path.read_bytes() == b'abc'
        assert len(sources) == 1 and sources[0].endswith('.part')
        assert sorted(p.name for p in path.parent.iterdir()) == ['latest.ckpt']

    def test_key_values_round_trip(self):
        text = format_key_values({'epochs': 3, 'radius': None, 'scales': [8, 12], 'augment': True})
        assert parse_key_values(text) == {'epochs': '3', 'radius': '', 'scales': '8,12', 'augment': 'true'}
