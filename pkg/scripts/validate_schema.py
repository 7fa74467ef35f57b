#!/usr/bin/env python3
"""
Validate analysis reports and problem files against their schemas.

Reports are checked against schema.json, parsed problem files against
data_schema.json. Fails hard on any validation error - no silent errors.
"""

import json
import sys
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Tuple

try:
    import jsonschema
except ImportError:
    print("ERROR: jsonschema not installed. Install with: pip install jsonschema")
    sys.exit(1)

ROOT_DIR = Path(__file__).parent.parent
REPORT_SCHEMA = ROOT_DIR / 'schema.json'
PROBLEM_SCHEMA = ROOT_DIR / 'data_schema.json'


def load_schema(schema_path: Path) -> Dict[str, Any]:
    """Load JSON schema."""
    with open(schema_path, 'r', encoding='utf-8') as f:
        return json.load(f)


@lru_cache(maxsize=None)
def _validator(schema_path: str) -> jsonschema.Draft7Validator:
    return jsonschema.Draft7Validator(load_schema(Path(schema_path)))


def validate_data(data: Any, schema_path: Path = REPORT_SCHEMA) -> Tuple[bool, List[str]]:
    """
    Validate an in-memory document against a schema file.

    Returns:
        (is_valid, list_of_errors)
    """
    errors = sorted(_validator(str(schema_path)).iter_errors(data), key=lambda e: list(e.path))
    if errors:
        messages = []
        for error in errors:
            path = '.'.join(str(p) for p in error.path)
            messages.append(f"  {path}: {error.message}")
        return False, messages
    return True, []


def validate_file(file_path: Path, schema_path: Path = REPORT_SCHEMA) -> Tuple[bool, List[str]]:
    """
    Validate a report file (JSON) or a problem file (.pair) against its schema.

    Returns:
        (is_valid, list_of_errors)
    """
    if file_path.suffix == '.pair':
        from problem_files import read_problem_assignments
        from errors import PairToolError
        try:
            data = read_problem_assignments(file_path.read_text(encoding='utf-8'))
        except PairToolError as e:
            return False, [f"  {e}"]
        return validate_data(data, PROBLEM_SCHEMA)

    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        return False, [f"Invalid JSON: {e}"]
    return validate_data(data, schema_path)


def main():
    if not REPORT_SCHEMA.exists():
        print(f"ERROR: Schema not found: {REPORT_SCHEMA}")
        sys.exit(1)

    if len(sys.argv) < 2:
        print("Usage: validate_schema.py <report.json|problem.pair> [...]")
        print("       validate_schema.py --all  # Validate all problems/*.pair files")
        sys.exit(1)

    if sys.argv[1] == '--all':
        problems_dir = ROOT_DIR / 'problems'
        if not problems_dir.exists():
            print(f"ERROR: Problems directory not found: {problems_dir}")
            sys.exit(1)
        files = sorted(problems_dir.glob('*.pair'))
        if not files:
            print(f"WARNING: No .pair files found in {problems_dir}")
            sys.exit(0)
    else:
        files = [Path(f) for f in sys.argv[1:]]

    all_valid = True

    for path in files:
        if not path.exists():
            print(f"ERROR: File not found: {path}")
            all_valid = False
            continue

        is_valid, errors = validate_file(path)

        if is_valid:
            print(f"✅ {path.name}: Valid")
        else:
            print(f"❌ {path.name}: INVALID")
            for error in errors:
                print(error)
            all_valid = False

    if not all_valid:
        sys.exit(1)

    print("\n✅ All files valid!")


if __name__ == '__main__':
    main()
