from setuptools import setup, find_packages
import glob

setup(
    name='mailballot',
    package_dir={'': 'src'},
    packages=find_packages('src'),
    scripts=glob.glob('src/scripts/*.py'),
    use_scm_version=True,
    setup_requires=['setuptools_scm'],
    include_package_data=True,
    install_requires=[
        'dask',
        'jinja2',
        'numpy',
        'pandas',
        'sympy',
        'more_itertools',
        'importlib-resources',
        'pyyaml',
    ],
    extras_require={
        'fast': ['gmpy2'],
        'monitor': ['psutil'],
    },
    entry_points={
        'console_scripts': ['mailballot=mailballot.cli:main']
    },
    license='MIT',
    description='verifiable remote voting with paper assurance: bulletin board, mixnet, threshold decryption'
)
