import _pickle as cPickle
import base64

class AuthFail(Exception):
    pass

def confirmAuth(headers):
    '''
    Get AuthToken from headers, decode it with base64, and
    load with cPickle to token object.
    '''
    auth_token = headers.get('AuthToken', None)
    if not auth_token:
        raise AuthFail('No AuthToken provided')

    try:
        decoded_token = base64.b64decode(auth_token).decode('utf-8')
        pickled_token = cPickle.loads(decoded_token)

        if not isinstance(pickled_token, cPickle):
            raise AuthFail('Invalid AuthToken')

        return pickled_token

    except base64.binascii.Error as e:
        raise AuthFail('Invalid AuthToken: bad base64 data')

    except cPickle.UnpickleableTypeError:
        raise AuthFail('Invalid AuthToken: not a cPickle object')
