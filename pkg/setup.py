import codecs
from setuptools import setup


with codecs.open('README.md', encoding='utf-8') as f:
    long_description = f.read()

setup(
    name="motioncue",
    version="0.1",
    license='MIT',
    description="Switchable model predictive motion cueing for hexapod "
                "flight simulators",
    packages=['motioncue'],
    install_requires=['numpy>=1.16', 'scipy>=1.6'],
    tests_require=['pytest'],
    entry_points="""
    [console_scripts]
    mcue = motioncue.cli:main
    """,
    classifiers=[
        'License :: OSI Approved :: MIT License',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: Implementation :: CPython',
        'Topic :: Scientific/Engineering',
    ],
    long_description=long_description,
)
