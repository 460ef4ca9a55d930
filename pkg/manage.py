#!/usr/bin/env python
"""Django's command-line utility, also the lab's command-line surface."""
import os
import sys

# Documented subcommand spellings mapped onto Django command modules.
SUBCOMMAND_ALIASES = {
    'pretrain-gen': 'pretrain_gen',
    'pretrain-disc': 'pretrain_disc',
    'adv-train': 'adv_train',
}


def main():
    """Run administrative tasks."""
    os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'config.settings')
    try:
        from django.core.management import execute_from_command_line
    except ImportError as exc:
        raise ImportError(
            "Couldn't import Django. Are you sure it's installed and "
            "available on your PYTHONPATH environment variable? Did you "
            "forget to activate a virtual environment?"
        ) from exc
    argv = list(sys.argv)
    if len(argv) > 1:
        argv[1] = SUBCOMMAND_ALIASES.get(argv[1], argv[1])
    execute_from_command_line(argv)


if __name__ == '__main__':
    main()
