"""Basic tests for the NASTy linker package."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

def test_import_modules():
    """Test that all modules can be imported."""
    try:
        from evaluation import linking_evaluator
        from link_coordinator import LinkingCoordinator
        from nasty_linker import run_nastylinker
        assert linking_evaluator is not None
        assert LinkingCoordinator is not None
        assert run_nastylinker is not None
        print("✓ All modules imported successfully")
    except Exception as e:
        print(f"✗ Import failed: {e}")
        raise

def test_algorithm_count():
    """Test that we have the expected number of algorithms."""
    from settings import ALGORITHMS, ALGORITHM_DEFAULTS
    assert len(ALGORITHMS) == 5, f"Expected 5 algorithms, got {len(ALGORITHMS)}"
    assert set(ALGORITHM_DEFAULTS) == set(ALGORITHMS)
    print(f"✓ Correct number of algorithms: {len(ALGORITHMS)}")

def test_report_template():
    """Test that the report template is present."""
    from evaluation import TEMPLATE_DIR
    assert os.path.isfile(os.path.join(TEMPLATE_DIR, "report.txt.j2"))
    print("✓ Report template found")

if __name__ == "__main__":
    test_import_modules()
    test_algorithm_count()
    test_report_template()
    print("\n✅ All tests passed!")
