# apps/cli/management/base.py
import io
import logging

import numpy as np
from django.core.management.base import BaseCommand, CommandError
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table
from threadpoolctl import threadpool_limits

from apps.cli.runconfig import PRESETS, RunConfig
from apps.common.exceptions import WhdSpotException
from apps.diffcore import get_default_dtype, set_default_dtype

logger = logging.getLogger(__name__)


def flag_name(field: str) -> str:
    return '--' + field.replace('_', '-')


class RunConfigCommand(BaseCommand):
    """
    Base for the detection commands: every RunConfig key is a flag, and
    library errors surface as CommandError (exit code 1).
    """

    requires_system_checks = []

    def add_arguments(self, parser):
        parser.add_argument('--config', dest='config_file', help='key=value run configuration file')
        parser.add_argument('--preset', choices=sorted(PRESETS), help='Desk or paper scale defaults')
        for name, field in RunConfig.model_fields.items():
            if name == 'preset':
                continue
            parser.add_argument(flag_name(name), dest=name, default=None, help=f'Run config key {name}')
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def handle(self, *args, **options):
        overrides = {name: options.get(name) for name in RunConfig.model_fields if name != 'preset'}
        previous_dtype = np.dtype(get_default_dtype()).name
        try:
            config = RunConfig.resolve(options.get('preset'), options.get('config_file'), overrides)
            set_default_dtype(config.precision)
            with threadpool_limits(limits=config.threads):
                self.run(config, **options)
        except (WhdSpotException, ValidationError) as exc:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {exc}")
            raise CommandError(str(exc)) from exc
        finally:
            set_default_dtype(previous_dtype)

    def run(self, config: RunConfig, **options):
        raise NotImplementedError

    def print_table(self, table: Table) -> None:
        console = Console(file=io.StringIO(), width=140, color_system=None)
        console.print(table)
        self.stdout.write(console.file.getvalue().rstrip('\n'))
