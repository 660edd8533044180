import pytest

from solvsearch.hsp import (
    HspVector,
    MaterialTarget,
    Solvent,
    SolventLibrary,
    load_library,
    shipped_library_path,
)

# default material pair used throughout: a pre-development resist layer to
# dissolve and a post-development layer to protect
TARGET = MaterialTarget("target_layer", HspVector(18.27, 7.11, 8.20), 6.28)
PROTECT = MaterialTarget("protect_layer", HspVector(17.95, 11.47, 14.24), 8.81)


@pytest.fixture(scope="session")
def target():
    return TARGET


@pytest.fixture(scope="session")
def protect():
    return PROTECT


@pytest.fixture(scope="session")
def shipped_library():
    return load_library(shipped_library_path())


def make_solvent(name, dd, dp, dh, vm=100.0, bp=None, fp=None, roles=(),
                 safety="allowed", smiles=""):
    return Solvent(
        name=name, smiles=smiles, hsp=HspVector(dd, dp, dh),
        molar_volume=vm, boiling_point=bp, flash_point=fp,
        role_tags=frozenset(roles), safety_class=safety,
    )


@pytest.fixture()
def toy_library():
    """Six hand-placed solvents spanning host / separator / filler roles."""
    return SolventLibrary([
        make_solvent("SolvA", 18.0, 7.0, 8.0, vm=90.0, bp=80.0, fp=10.0),
        make_solvent("SolvB", 16.0, 4.0, 2.0, vm=110.0, bp=120.0, fp=20.0),
        make_solvent("SolvC", 15.0, 3.0, 6.0, vm=120.0, bp=160.0, fp=40.0,
                     roles=("heavy_modifier",)),
        make_solvent("SolvD", 17.9, 11.0, 14.0, vm=95.0, bp=200.0, fp=90.0),
        make_solvent("SolvE", 20.0, 2.0, 5.0, vm=105.0, bp=140.0, fp=30.0),
        make_solvent("SolvF", 14.0, 0.0, 1.0, vm=130.0, bp=60.0, fp=-10.0,
                     roles=("fast_penetrant",)),
    ])


@pytest.fixture()
def flat_library():
    """Five identical-to-target solvents: every RED check passes, so
    discretization tests never trip the physics constraints."""
    return SolventLibrary([
        make_solvent(f"Flat{i}", 18.27, 7.11, 8.20, bp=80.0 + 30.0 * i)
        for i in range(5)
    ])


@pytest.fixture()
def library_csv(tmp_path):
    """Write a small valid CSV and return its path."""
    path = tmp_path / "lib.csv"
    path.write_text(
        "name,smiles,delta_d,delta_p,delta_h,molar_volume,boiling_point,"
        "flash_point,roles,safety_class\n"
        "Acetone,CC(C)=O,15.5,10.4,7.0,74.0,56,-20,fast_penetrant,allowed\n"
        "Toluene,Cc1ccccc1,18.0,1.4,2.0,106.8,111,4,aromatic,warn\n"
        "Ethyl lactate,CCOC(=O)C(C)O,16.0,7.6,12.5,115.0,154,46,heavy_modifier,allowed\n"
    )
    return path
