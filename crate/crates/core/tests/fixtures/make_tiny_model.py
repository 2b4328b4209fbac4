"""Builds tiny_seg.onnx: a 64x64 two-class segmentation head with 4 mask
prototypes whose outputs follow image darkness.

Stride-8 anchors score "fiber" by the mean darkness of their 8x8 cell and
predict a 16x16 box centred on the cell. Prototype 0 is positive where the
4x4-pooled darkness exceeds 0.5. Other anchors and classes score zero.
"""
import torch
import torch.nn.functional as F


class Tiny(torch.nn.Module):
    def forward(self, x):
        dark = 1.0 - x.mean(dim=1, keepdim=True)  # [1,1,64,64]
        s8 = F.avg_pool2d(dark, 8).flatten(2)  # [1,1,64]
        n = s8.shape[2]
        idx = torch.arange(n, dtype=torch.float32)
        cx = (idx % 8) * 8 + 4
        cy = torch.floor(idx / 8) * 8 + 4
        wh = torch.full((n,), 16.0)
        boxes = torch.stack([cx, cy, wh, wh]).unsqueeze(0)  # [1,4,64]
        zeros = torch.zeros(1, 1, n)
        coeff = torch.cat([torch.ones(1, 1, n), torch.zeros(1, 3, n)], dim=1)
        head8 = torch.cat([boxes, s8, zeros, coeff], dim=1)  # [1,10,64]
        rest = torch.zeros(1, 10, 16 + 4)
        cand = torch.cat([head8, rest], dim=2)  # [1,10,84]
        p = F.avg_pool2d(dark, 4)  # [1,1,16,16]
        protos = torch.cat([(p - 0.5) * 20.0, torch.zeros(1, 3, 16, 16)], dim=1)
        return cand, protos


if __name__ == "__main__":
    torch.onnx.export(
        Tiny(),
        torch.zeros(1, 3, 64, 64),
        "tiny_seg.onnx",
        input_names=["images"],
        output_names=["output0", "output1"],
        opset_version=13,
        dynamo=False,
    )
