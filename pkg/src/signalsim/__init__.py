"""Queue-network simulator and pressure-based signal control toolkit.

Subpackage map:

- ``netmodel``   road network data model, CityFlow loader, synthetic grids
- ``pressure``   queue/pressure calculus over traffic snapshots
- ``policies``   signal control policies (G2P, max-pressure, baselines)
- ``demand``     arrival processes, turn probabilities, service models
- ``simcore``    macroscopic and mesoscopic simulation engines, run loop
- ``stability``  flow conservation, feasibility LP, drift and boundedness
- ``features``   observation/reward export and the env stepping protocol
- ``cli``        command line front end (run / compare / stability / serve / validate)
"""

__version__ = "0.1.0"
