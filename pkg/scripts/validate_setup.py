# scripts/validate_setup.py

import os
import sys
from pathlib import Path
from typing import List, Tuple

# Add parent directory to path
sys.path.append(str(Path(__file__).parent.parent))


def check_dependencies() -> Tuple[bool, str]:
    """Check if the numerical stack is installed"""
    try:
        import numpy
        import pandas
        import pydantic
        import pydantic_settings
        import scipy
        import yaml
        return True, "✅ Core dependencies installed"
    except ImportError as e:
        return False, f"❌ Missing dependency: {e.name}. Run: pip install -r requirements.txt"


def check_output_root() -> Tuple[bool, str]:
    """Check that the output root can be created and written"""
    from config.settings import settings

    root = Path(settings.groundlab_output_root)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        return False, f"❌ Output root {root} not writable: {e.strerror}"
    if not os.access(root, os.W_OK):
        return False, f"❌ Output root {root} not writable"
    return True, f"✅ Output root {root} is writable"


def check_experiments(directory: str = "experiments") -> Tuple[bool, List[str]]:
    """Parse and validate every experiment file"""
    from config.experiment import load_experiment
    from core.exceptions import ConfigError

    messages = []
    all_valid = True
    files = sorted(Path(directory).glob("*.yaml"))
    if not files:
        return False, [f"❌ No experiment files in {directory}"]

    for path in files:
        try:
            config = load_experiment(path)
            messages.append(f"  ✅ {path.name}: {config.domain.kind}, h={config.grid.h:g}, {len(config.checks)} checks")
        except ConfigError as e:
            messages.append(f"  ❌ {path.name}: {e}")
            all_valid = False
    return all_valid, messages


def main():
    print("\n" + "=" * 60)
    print("🔍 Infinity Ground State Lab - Setup Validation")
    print("=" * 60)

    all_good = True

    success, message = check_dependencies()
    print(f"\n{message}")
    all_good = all_good and success
    if not success:
        return 1

    success, message = check_output_root()
    print(message)
    all_good = all_good and success

    print("\n📋 Experiment files:")
    success, messages = check_experiments()
    for line in messages:
        print(line)
    all_good = all_good and success

    print("\n" + "=" * 60)
    if all_good:
        print("✅ Ready. Run an experiment with:")
        print("  python main.py run experiments/disc.yaml")
    else:
        print("⚠️  Some components need attention")
    return 0 if all_good else 1


if __name__ == "__main__":
    sys.exit(main())
