import nsflow


def test_import():
    assert nsflow is not None
