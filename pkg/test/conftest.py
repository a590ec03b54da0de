def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full trial counts, deselect with -m "not slow"')
