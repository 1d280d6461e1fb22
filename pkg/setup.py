#!/usr/bin/env python

"""The setup script."""

from setuptools import setup, find_packages
from shapefit import __version__, __email__, __author__

with open('README.rst') as readme_file:
    readme = readme_file.read()

with open('HISTORY.rst') as history_file:
    history = history_file.read()

requirements = [
    'numpy>=1.20',
    'scipy>=1.6',
    'scikit-image>=0.19',
    'scikit-learn>=0.23.2',
    'pandas>=1.1.1',
    'PyYAML>=5.3.1',
]

setup_requirements = ['pytest-runner']
test_requirements = ['pytest>=3']

setup(
    author=__author__,
    author_email=__email__,
    maintainer_email=__email__,
    maintainer=__author__,
    python_requires='>=3.9',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Healthcare Industry',
        'Intended Audience :: Science/Research',
        'Natural Language :: English',
        'Operating System :: OS Independent',
        'Topic :: Scientific/Engineering :: Medical Science Apps.',
        'Topic :: Scientific/Engineering :: Image Processing',
        'Topic :: Scientific/Engineering',
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    description="fit a statistical shape model to binary segmentations with a particle swarm and a Dice loss",
    entry_points={
        'console_scripts': [
            'shapefit=shapefit.cli:main',
        ],
    },
    install_requires=requirements,
    license="MIT license",
    long_description=readme + '\n\n' + history,
    include_package_data=True,
    keywords=['shapefit',
              'statistical shape model',
              'point distribution model',
              'PCA',
              'particle swarm optimization',
              'PSO',
              'dice',
              'segmentation',
              'surface reconstruction',
              'marching cubes',
              'medical imaging'],
    name='shapefit',
    packages=find_packages(include=['shapefit', 'shapefit.*']),
    setup_requires=setup_requirements,
    test_suite='tests',
    tests_require=test_requirements,
    version=__version__,
    zip_safe=False,
)
