"""MNM and MUSIC direction finding for coprime, nested and symmetry-imposed planar arrays."""
