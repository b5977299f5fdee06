#!/usr/bin/env python3
"""Scalar-arithmetic oracle for the optimizer trajectory tests.

Recomputes short SGDM/Adam/Adagrad trajectories with plain Python floats
(IEEE double), column by column, without any of the library code. The
printed values are frozen into tests/acceptance_main.cpp and
tests/test_optim.cpp; rerun this script if the traced scenarios change.

Usage: python3 optimizer_trace.py
"""

import math


def centralize(col):
    mu = sum(col) / len(col)
    return [x - mu for x in col]


def sgdm_trace(w, grads, alpha, beta, gc, steps_form="paper"):
    w = list(w)
    m = [0.0] * len(w)
    hist = []
    for g in grads:
        gh = centralize(g) if gc else list(g)
        if steps_form == "paper":
            m = [beta * mi + (1.0 - beta) * gi for mi, gi in zip(m, gh)]
        else:
            m = [beta * mi + gi for mi, gi in zip(m, gh)]
        w = [wi - alpha * mi for wi, mi in zip(w, m)]
        hist.append(list(w))
    return hist


def adam_trace(w, grads, alpha, beta1, beta2, eps, gc):
    w = list(w)
    m = [0.0] * len(w)
    v = [0.0] * len(w)
    t = 0
    hist = []
    for g in grads:
        t += 1
        gh = centralize(g) if gc else list(g)
        m = [beta1 * mi + (1.0 - beta1) * gi for mi, gi in zip(m, gh)]
        v = [beta2 * vi + (1.0 - beta2) * gi * gi for vi, gi in zip(v, gh)]
        mhat = [mi / (1.0 - beta1**t) for mi in m]
        vhat = [vi / (1.0 - beta2**t) for vi in v]
        w = [wi - alpha * mh / (math.sqrt(vh) + eps)
             for wi, mh, vh in zip(w, mhat, vhat)]
        hist.append(list(w))
    return hist


def adagrad_trace(w, grads, alpha, eps, gc):
    w = list(w)
    v = [0.0] * len(w)
    hist = []
    for g in grads:
        gh = centralize(g) if gc else list(g)
        v = [vi + gi * gi for vi, gi in zip(v, gh)]
        w = [wi - alpha * gi / (math.sqrt(vi) + eps)
             for wi, gi, vi in zip(w, gh, v)]
        hist.append(list(w))
    return hist


def show(name, hist):
    print(name)
    for t, w in enumerate(hist, 1):
        print("  t=%d: %s" % (t, ", ".join("%.17g" % x for x in w)))


def main():
    grads = [[1.0, 3.0], [2.0, 0.0], [-1.0, 5.0]]

    show("sgdm paper gc on  (w0=[1,1] a=0.1 b=0.9)",
         sgdm_trace([1.0, 1.0], grads, 0.1, 0.9, gc=True))
    show("sgdm classic gc on (w0=[1,1] a=0.1 b=0.9)",
         sgdm_trace([1.0, 1.0], grads, 0.1, 0.9, gc=True,
                    steps_form="classic"))
    show("adam gc on (w0=[1,2] a=0.001 b1=0.9 b2=0.999 eps=1e-8)",
         adam_trace([1.0, 2.0], grads, 0.001, 0.9, 0.999, 1e-8, gc=True))
    show("adagrad gc off (w0=[0.5,-0.5] a=0.1 eps=1e-8)",
         adagrad_trace([0.5, -0.5], grads, 0.1, 1e-8, gc=False))
    # two-step scalar case: v accumulates 4 then 8
    show("adagrad gc off (w0=[0] a=0.1 eps=0, g=[2] twice)",
         adagrad_trace([0.0], [[2.0], [2.0]], 0.1, 0.0, gc=False))


if __name__ == "__main__":
    main()
