from .codec import (DecodeResult, SystematicEncoder, TannerGraph, encoder_for, ldpc_encode,
                    sum_product_decode, tanner_graph)
from .construct import (Protograph, build_regular_ldpc, lift_protograph, read_protograph,
                        write_protograph)
from .matrix import GF2Echelon, ParityCheckMatrix, gf2_rref, read_alist, write_alist

__all__ = [
    "DecodeResult", "GF2Echelon", "ParityCheckMatrix", "Protograph", "SystematicEncoder",
    "TannerGraph", "build_regular_ldpc", "encoder_for", "gf2_rref", "ldpc_encode", "lift_protograph",
    "read_alist", "read_protograph", "sum_product_decode", "tanner_graph", "write_alist",
    "write_protograph",
]
