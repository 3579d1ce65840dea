import os
from setuptools import setup, find_packages

# single source of truth for package version
version_ns = {}
with open(os.path.join("fpm_codesign", "version.py")) as f:
    exec(f.read(), version_ns)
version = version_ns['__version__']

setup(
    name="fpm_codesign",
    version=version,
    packages=find_packages(include=['fpm_codesign*']) + ['fpm_codesign.schemas',
                                                         'fpm_codesign.presets',
                                                         'fpm_codesign.patterns'],
    install_requires=['numpy>=1.21', 'scipy>=1.7', 'stevedore>=3.0', 'PyYAML>=6.0',
                      'jsonschema>=4.0', 'Pillow>=9.1'],
    include_package_data=True,
    package_data={'fpm_codesign.schemas': ['*.json'],
                  'fpm_codesign.presets': ['*.yaml'],
                  'fpm_codesign.patterns': ['*.yaml']},
    entry_points={
        'fpm_codesign.dataset': [
            'binary16 = fpm_codesign.binary16:Binary16Source',
            'constant = fpm_codesign.testing:ConstantSource',
            'image-dir = fpm_codesign.image_dir:ImageDirectorySource',
            'mnist = fpm_codesign.mnist:MnistSource'
        ],
        'console_scripts': [
            'fpm-codesign = fpm_codesign.cli:main'
        ]
    }
)
