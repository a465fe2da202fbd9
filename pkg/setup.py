"""setuptools-based installation script.

File is based on this template: https://github.com/pypa/sampleproject
"""

import os
import unittest
# Always prefer setuptools over distutils
from setuptools import find_packages
from setuptools import setup


_DEPENDENCIES = [
    # Pin to known working versions to prevent episodic breakage from library
    # version mismatches.
    # direct dependencies
    'numpy>=1.22,<3',
    'scipy>=1.9,<2',
    'pyyaml<=6.0.1',
    'tenacity<=8.2.3',
    'tabulate<=0.9.0',
    'pandas>=1.3',
    'sed_eval<=0.2.1',
    'psds_eval<=0.5.3',
    # dependencies for test code
    'parameterized<=0.9.0',
    'mock<=5.1.0',
]


def unittest_suite():
  """Get test suite (Python unit tests only)."""
  test_loader = unittest.TestLoader()
  test_suite = test_loader.discover('test/unit', pattern='*_test.py')
  return test_suite


def get_sedkit_version():
  """Get the sedkit version out of the _sedkit_version.py source file.

  Setup.py should not import the sedkit version from sedkit directly since
  ambiguity in import order could lead to an old version of sedkit setting
  the version number.

  Returns:
    string of sedkit version.

  Raises:
    ValueError: if the version is not found.
  """
  filename = os.path.join(
      os.path.dirname(__file__), 'sedkit/_sedkit_version.py')
  with open(filename, 'r') as versionfile:
    for line in versionfile:
      if line.startswith('SEDKIT_VERSION ='):
        # Get the version then strip whitespace and quote characters.
        version = line.partition('=')[2]
        return version.strip().strip('\'"')
  raise ValueError('Could not find version.')


def get_readme_contents():
  """Get the README.md contents."""
  with open('README.md', 'r') as f:
    return f.read()


setup(
    name='sedkit',
    python_requires='>=3.8',

    # Versions should comply with PEP440.
    version=get_sedkit_version(),
    description=('Onset/offset weighted loss, post-processing and evaluation'
                 ' tools for frame-level sound event detection'),
    long_description=get_readme_contents(),
    long_description_content_type='text/markdown',

    author='The sedkit Authors',
    license='Apache',
    classifiers=[
        'Development Status :: 3 - Alpha',
        'Intended Audience :: Science/Research',
        'Topic :: Multimedia :: Sound/Audio :: Analysis',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'License :: OSI Approved :: Apache Software License',
        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],
    keywords='sound event detection loss evaluation psds',

    # Packages to distribute.
    packages=find_packages(exclude=['test', 'test.*']),
    include_package_data=True,

    # List run-time dependencies here.  These will be installed by pip when
    # your project is installed.
    install_requires=_DEPENDENCIES,

    # Define a test suite for Python unittests only.
    test_suite='setup.unittest_suite',

    # Provide executable scripts - these will be added to the user's path.
    entry_points={
        'console_scripts': [
            'sedkit=sedkit.commands.sedkit:main',
        ],
    },
)
