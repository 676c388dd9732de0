"""Expected per-row output shapes for the three architectures.

DCCNN rows 2a/2b pool 128-map branches, so their outputs are 1x1x128: any
larger channel count there would contradict the 384-channel concatenation
of three such branches in row 3.
"""


def wcrn_expected(c, k):
    return {
        "1a": (5, 5, 64),
        "1b": (3, 3, 64),
        "2a": (1, 1, 64),
        "2b": (1, 1, 64),
        "3": (1, 1, 128),
        "4": (1, 1, 128),
        "5": (1, 1, 128),
        "6": (1, 1, 128),
        "7": (k,),
    }


def dccnn_expected(c, k):
    rows = {
        "1a": (5, 5, 128),
        "1b": (3, 3, 128),
        "1c": (1, 1, 128),
        "2a": (1, 1, 128),
        "2b": (1, 1, 128),
        "3": (1, 1, 384),
        "13": (k,),
    }
    for row in range(4, 13):
        rows[str(row)] = (1, 1, 128)
    return rows


def hresnet_expected(c, k):
    return {
        "1": (7, 7, 64),
        "2": (7, 7, 64),
        "3": (7, 7, 64),
        "4": (7, 7, 64),
        "5": (64,),
        "6": (k,),
    }


def wcrn_param_tally(c, k):
    """Hand tally: P*Q*M*K + K per conv/dense kernel, 2C per batch norm."""
    return (
        (1 * 1 * c * 64 + 64)        # 1a
        + (3 * 3 * c * 64 + 64)      # 1b
        + 2 * 128                    # BN row 4
        + (1 * 1 * 128 * 128 + 128)  # conv row 4
        + 2 * 128                    # BN row 5
        + (1 * 1 * 128 * 128 + 128)  # conv row 5
        + (128 * k + k)              # FC row 7
    )


def dccnn_param_tally(c, k):
    return (
        (1 * 1 * c * 128 + 128)
        + (3 * 3 * c * 128 + 128)
        + (5 * 5 * c * 128 + 128)
        + 2 * 384                          # BN row 4 (on the 384-channel concat)
        + (1 * 1 * 384 * 128 + 128)        # conv row 4
        + 2 * 128                          # BN row 5
        + 7 * (1 * 1 * 128 * 128 + 128)    # convs in rows 5, 6, 8, 9, 11, 12 (x2)
        + (128 * k + k)
    )


def hresnet_param_tally(c, k):
    return (
        (3 * 3 * c * 64 + 64)
        + 2 * 64                      # BN row 2
        + 2 * (3 * 3 * 64 * 64 + 64)  # convs rows 2 and 3
        + (64 * k + k)
    )
