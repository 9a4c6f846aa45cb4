from setuptools import setup

REQUIRED_PACKAGES = [
  'numpy>=1.20',
  'scipy>=1.7',
  'numba>=0.53',
  'pandas>=1.2',
]

setup(
    name='picbench',
    version='0.1',
    install_requires=REQUIRED_PACKAGES,
    extras_require={'test': ['pytest>=6.0']},
    packages=['picbench'],
    include_package_data=True,
    requires=[]
)
