import re

from setuptools import setup
from codecs import open
from os import path

root_dir = path.abspath(path.dirname(__file__))

with open(path.join(root_dir, 'agghoo', '__init__.py'), encoding='utf-8') as f:
    __version__ = re.search(r"^__version__ = '([^']+)'", f.read(), re.M).group(1)

with open(path.join(root_dir, 'README.rst'), encoding='utf-8') as f:
    long_description = f.read()

with open(path.join(root_dir, 'requirements.txt'), encoding='utf-8') as f:
    install_requires = [line.strip() for line in f if line.strip()]


setup(
    name='agghoo',
    version=__version__,

    description='Aggregated hold-out (Agghoo) and majority hold-out for hyperparameter selection.',
    long_description=long_description,

    license='MIT',

    classifiers=[
        'Development Status :: 3 - Alpha',

        'Intended Audience :: Science/Research',
        'Topic :: Scientific/Engineering :: Mathematics',

        'License :: OSI Approved :: MIT License',

        'Programming Language :: Python :: 3.8',
        'Programming Language :: Python :: 3.9',
        'Programming Language :: Python :: 3.10',
        'Programming Language :: Python :: 3.11',
    ],

    keywords='cross-validation hold-out aggregation model selection kernel svr knn',

    packages=['agghoo'],
    python_requires='>=3.8',

    entry_points={
        'console_scripts': [
            'agghoo = agghoo.cli:cli_command'
        ],
    },

    install_requires=install_requires,
)
