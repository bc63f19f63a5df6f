#!/usr/bin/env python

import os
from setuptools import setup


def get_readme():
    md_path = os.path.join(os.path.dirname(__file__), "README.md")
    txt_path = os.path.join(os.path.dirname(__file__), "README.txt")

    if os.path.exists(txt_path):
        d = open(txt_path).read()
    elif os.path.exists(md_path):
        d = open(md_path).read()
    else:
        d = ""
    return d


setup(name='opal',
      version='0.1.0',
      description='Approximate opacity verification for finite and control systems',
      license='BSD',
      keywords='opacity security transition-systems simulation symbolic-abstraction',
      install_requires=['numpy', 'scipy', 'pandas'],
      extras_require={'test': ['pytest']},
      python_requires='>=3.11',
      packages=['opal'],
      entry_points={'console_scripts': ['opal=opal.util:main']},
      long_description=get_readme(),
      long_description_content_type='text/markdown',
      classifiers=[
          'Development Status :: 2 - Pre-Alpha',
          'Topic :: Scientific/Engineering :: Mathematics',
          'Topic :: Security',
          'License :: OSI Approved :: BSD License',
          'Intended Audience :: Science/Research',
      ],
      )
