import os

import setuptools

setuptools.setup(
    name="remshare",
    version="0.1.0",
    license="MIT",
    description="Weighted processor-sharing queues by remaining work: simulation, fluid limits and scaling tests.",
    keywords="queueing processor-sharing fluid-limit measure-valued simulation trio",
    install_requires=open(os.path.join(os.path.dirname(__file__), "requirements.txt"))
    .read()
    .strip()
    .split("\n"),
    extras_require={"test": ["pytest>=7.0"]},
    readme="description.md",
    packages=["remshare", "remshare.commands"],
    entry_points={"console_scripts": ["remshare=remshare.cli:main"]},
    classifiers=[
        "Framework :: Trio",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Software Development :: Libraries",
        "Intended Audience :: Science/Research",
    ],
)
