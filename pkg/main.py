import logging
import os
import sys
from datetime import datetime

from src.app import MaskAttackApp
from src.config.constants import APP_VERSION, LOGS_SUBDIR


class TeeOutput:
    """Mirror stdout to the console and a per-run log file"""

    def __init__(self, file_path):
        self.terminal = sys.stdout
        self.log_file_path = file_path
        self.log_file = open(file_path, "w", encoding="utf-8")

    def write(self, message):
        self.terminal.write(message)
        self.log_file.write(message)
        self.log_file.flush()

    def flush(self):
        self.terminal.flush()
        self.log_file.flush()

    def close(self):
        if hasattr(self, "log_file") and not self.log_file.closed:
            self.log_file.close()


def _configure_logging(stream):
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)
    logging.basicConfig(
        stream=stream,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )


def main(argv=None):
    app = MaskAttackApp(argv)
    code = app.prepare()
    if code is not None:
        return code

    logs_dir = os.path.join(os.path.expanduser(app.output_dir), LOGS_SUBDIR)
    os.makedirs(logs_dir, exist_ok=True)
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    log_file_path = os.path.join(logs_dir, f"{app.command}_{timestamp}.log")

    tee = TeeOutput(log_file_path)
    sys.stdout = tee
    _configure_logging(tee)

    print(f"=== maskattack v{APP_VERSION}: {app.command} ===")
    print(f"Log file: {log_file_path}")

    try:
        return app.run()
    finally:
        _configure_logging(tee.terminal)
        sys.stdout = tee.terminal
        tee.close()


if __name__ == "__main__":
    sys.exit(main())
