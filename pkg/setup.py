from setuptools import setup
from regsurv.version import getVersion

try:
    from setuptools import find_namespace_packages
except ImportError:
    from setuptools import PEP420PackageFinder

    find_namespace_packages = PEP420PackageFinder.find

setup(
    name="regsurv",
    version=getVersion(),
    packages=find_namespace_packages(
        include=[
            "regsurv",
            "regsurv.config",
            "regsurv.property",
        ]
    ),
    package_data={"regsurv": ["data/*"]},
    entry_points={"console_scripts": ["regsurv=regsurv.__main__:main"]},
    install_requires=["numpy>=1.17", "scipy>=1.3", "pandas>=1.0"],
    license="GAGPL",
    python_requires=">=3.7",
)
