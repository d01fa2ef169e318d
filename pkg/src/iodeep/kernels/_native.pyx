# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython twins of the pure-Python scoring kernels (see pure.py)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef extern from *:
    """
    static const unsigned long long FNV_OFFSET = 14695981039346656037ULL;
    static const unsigned long long FNV_PRIME = 1099511628211ULL;
    """
    const unsigned long long FNV_OFFSET
    const unsigned long long FNV_PRIME


cdef unsigned long long _fnv1a64_raw(const unsigned char* data, Py_ssize_t n) nogil:
    cdef unsigned long long h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(n):
        h = (h ^ data[i]) * FNV_PRIME
    return h


def fnv1a64(bytes data) -> int:
    return _fnv1a64_raw(data, len(data))


def embed_token_counts(list tokens, int dim):
    cdef cnp.ndarray[cnp.float32_t, ndim=1] counts = np.zeros(dim, dtype=np.float32)
    cdef bytes token
    cdef unsigned long long h
    for token in tokens:
        h = _fnv1a64_raw(token, len(token))
        counts[<Py_ssize_t>(h % <unsigned long long>dim)] += 1.0
    return counts


def cosine_scores(cnp.ndarray matrix, cnp.ndarray query):
    cdef cnp.ndarray[cnp.float32_t, ndim=2] m = np.ascontiguousarray(matrix, dtype=np.float32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] q = np.ascontiguousarray(query, dtype=np.float32)
    cdef Py_ssize_t n = m.shape[0]
    cdef Py_ssize_t d = m.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double acc
    with nogil:
        for i in range(n):
            acc = 0.0
            for j in range(d):
                acc += <double>m[i, j] * <double>q[j]
            out[i] = acc
    return out


def topk_desc(cnp.ndarray scores, int k):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    if k > n:
        k = <int>n
    order = np.lexsort((np.arange(n), -s))
    return [int(i) for i in order[:k]]


def bm25_accumulate(
    cnp.ndarray scores,
    cnp.ndarray doc_ids,
    cnp.ndarray tfs,
    double idf,
    double k1,
    double b,
    cnp.ndarray len_norm,
):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = scores
    cdef cnp.ndarray[cnp.int32_t, ndim=1] ids = np.ascontiguousarray(doc_ids, dtype=np.int32)
    cdef cnp.ndarray[cnp.float32_t, ndim=1] t = np.ascontiguousarray(tfs, dtype=np.float32)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ln = np.ascontiguousarray(len_norm, dtype=np.float64)
    cdef Py_ssize_t m = ids.shape[0]
    cdef Py_ssize_t i
    cdef double tf, denom
    with nogil:
        for i in range(m):
            tf = <double>t[i]
            denom = tf + k1 * (1.0 - b + b * ln[ids[i]])
            s[ids[i]] += idf * tf * (k1 + 1.0) / denom
