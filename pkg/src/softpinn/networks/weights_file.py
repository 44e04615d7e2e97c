from typing import List, Literal

import numpy as np

from softpinn.config.settings import (
    BoundariesFile,
    boundaries_from_file,
    boundaries_to_file,
)
from softpinn.networks.gru import GRULayer, GRUWeights
from softpinn.networks.mlp import MLPWeights
from softpinn.networks.scaler import MinMax, Scaler
from softpinn.networks.surrogate import HeadKind, SurrogateModel
from softpinn.util.schema import (
    DocumentSection,
    VersionedDocument,
    dump_document,
    load_document,
)


class RangeFile(DocumentSection):
    low: List[float]
    high: List[float]


class ScalerFile(DocumentSection):
    """Channel ranges; angles and angular rates in degrees"""

    t: RangeFile
    x_deg: RangeFile
    u: RangeFile
    m_e: RangeFile
    beta_deg: RangeFile


class LayerFile(DocumentSection):
    weight: List[List[float]]
    """(fan_in, fan_out), row-major"""
    bias: List[float]


class HeadFile(DocumentSection):
    kind: HeadKind
    n_a: int


class SurrogateFile(VersionedDocument):
    kind: Literal["surrogate"] = "surrogate"
    n: int
    head: HeadFile
    T_s: float
    boundaries: BoundariesFile
    scaler: ScalerFile
    layers: List[LayerFile]


class GRULayerFile(DocumentSection):
    W_x: List[List[float]]
    W_h: List[List[float]]
    b: List[float]


class GRUFile(VersionedDocument):
    kind: Literal["gru"] = "gru"
    n: int
    T_s: float
    scaler: ScalerFile
    layers: List[GRULayerFile]
    readout: LayerFile


def _range(values: MinMax, factor: float = 1.0) -> RangeFile:
    return RangeFile(low=(values.low * factor).tolist(), high=(values.high * factor).tolist())


def scaler_to_file(scaler: Scaler) -> ScalerFile:
    return ScalerFile(
        t=_range(scaler.t),
        x_deg=_range(scaler.x, 180.0 / np.pi),
        u=_range(scaler.u),
        m_e=RangeFile(low=[float(scaler.delta.low[0])], high=[float(scaler.delta.high[0])]),
        beta_deg=RangeFile(
            low=[float(np.rad2deg(scaler.delta.low[1]))],
            high=[float(np.rad2deg(scaler.delta.high[1]))],
        ),
    )


def scaler_from_file(doc: ScalerFile) -> Scaler:
    return Scaler(
        t=MinMax(np.array(doc.t.low), np.array(doc.t.high)),
        x=MinMax(np.deg2rad(doc.x_deg.low), np.deg2rad(doc.x_deg.high)),
        u=MinMax(np.array(doc.u.low), np.array(doc.u.high)),
        delta=MinMax(
            np.array([doc.m_e.low[0], np.deg2rad(doc.beta_deg.low[0])]),
            np.array([doc.m_e.high[0], np.deg2rad(doc.beta_deg.high[0])]),
        ),
    )


def surrogate_to_file(model: SurrogateModel) -> SurrogateFile:
    return SurrogateFile(
        n=model.n,
        head=HeadFile(kind=model.head, n_a=model.n_a),
        T_s=model.T_s,
        boundaries=boundaries_to_file(model.boundaries),
        scaler=scaler_to_file(model.scaler),
        layers=[
            LayerFile(weight=w.tolist(), bias=b.tolist())
            for w, b in zip(model.core.weights, model.core.biases)
        ],
    )


def surrogate_from_file(doc: SurrogateFile) -> SurrogateModel:
    return SurrogateModel(
        n=doc.n,
        head=doc.head.kind,
        n_a=doc.head.n_a,
        T_s=doc.T_s,
        boundaries=boundaries_from_file(doc.boundaries),
        scaler=scaler_from_file(doc.scaler),
        core=MLPWeights(
            weights=[np.array(layer.weight) for layer in doc.layers],
            biases=[np.array(layer.bias) for layer in doc.layers],
        ),
    )


def save_surrogate(model: SurrogateModel, path: str) -> None:
    dump_document(surrogate_to_file(model), path)


def load_surrogate(path: str) -> SurrogateModel:
    return surrogate_from_file(load_document(path, SurrogateFile))


def save_gru(w: GRUWeights, path: str) -> None:
    dump_document(
        GRUFile(
            n=w.n,
            T_s=w.T_s,
            scaler=scaler_to_file(w.scaler),
            layers=[
                GRULayerFile(W_x=l.W_x.tolist(), W_h=l.W_h.tolist(), b=l.b.tolist())
                for l in w.layers
            ],
            readout=LayerFile(weight=w.W_out.tolist(), bias=w.b_out.tolist()),
        ),
        path,
    )


def load_gru(path: str) -> GRUWeights:
    doc = load_document(path, GRUFile)
    return GRUWeights(
        layers=[
            GRULayer(W_x=np.array(l.W_x), W_h=np.array(l.W_h), b=np.array(l.b))
            for l in doc.layers
        ],
        W_out=np.array(doc.readout.weight),
        b_out=np.array(doc.readout.bias),
        scaler=scaler_from_file(doc.scaler),
        T_s=doc.T_s,
    )
